from dataclasses import dataclass, field
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np
from einops import rearrange, reduce
from tqdm import tqdm

from ..data.frame import ClassWeights, FrameTable, ScoreMatrix, SoftLabelMatrix, check_stochastic, values_of
from ..errors import SoftBrierError, ValidationError
from ..models.gbdt import BoostConfig, BoostedEnsemble, fit_gbdt, gbdt_predict, grid_search
from ..models.learners import FittedLearner, LearnerSpec, fit_learner, predict_learner
from ..objectives.brier import brier_score, check_targets
from ..utils import log, no_progress


@dataclass(frozen=True)
class FoldPlan:
    """Leave-one-participant-out training folds plus an optional holdout block."""
    folds: Tuple[Tuple[int, ...], ...]
    holdout: Tuple[int, ...] = ()

    def __post_init__(self):
        seen = set()
        for block in self.blocks():
            if not block:
                raise ValidationError("fold blocks must be nonempty")
            overlap = seen & set(block)
            if overlap:
                raise ValidationError(f"participants {sorted(overlap)} appear in more than one fold block")
            seen |= set(block)

    def blocks(self) -> Tuple[Tuple[int, ...], ...]:
        return self.folds + ((self.holdout,) if self.holdout else ())

    @property
    def participants(self) -> Tuple[int, ...]:
        return tuple(sorted(p for block in self.blocks() for p in block))


def participant_folds(participants, holdout=()) -> FoldPlan:
    participants = sorted({int(p) for p in participants})
    holdout = tuple(sorted({int(p) for p in holdout}))
    stray = set(holdout) - set(participants)
    if stray:
        raise ValidationError(f"holdout participants {sorted(stray)} are not in the participant set")
    remainder = [p for p in participants if p not in holdout]
    if not remainder:
        raise ValidationError("no training participants remain after removing the holdout")
    return FoldPlan(folds=tuple((p,) for p in remainder), holdout=holdout)


@dataclass(eq=False)
class OofPrediction:
    """Out-of-fold probabilities for training rows, fold-averaged probabilities for test rows.

    `producer[i]` is the block whose model scored training row i; `fitted_on[b]` lists the
    participants that block model was trained on.
    """
    values: np.ndarray
    participant_id: np.ndarray
    producer: np.ndarray
    fitted_on: Tuple[Tuple[int, ...], ...]
    test_values: Optional[np.ndarray] = None

    def audit(self) -> List[str]:
        violations = []
        for b, trained in enumerate(self.fitted_on):
            rows = np.flatnonzero(self.producer == b)
            leaked = np.isin(self.participant_id[rows], trained)
            for i in rows[leaked]:
                violations.append(f"row {i}: participant {self.participant_id[i]} was in the training set of block {b}")
        unscored = np.flatnonzero(self.producer < 0)
        violations += [f"row {i}: no out-of-fold prediction" for i in unscored]
        return violations


def _restrict_to_present(P: np.ndarray, present: np.ndarray) -> np.ndarray:
    P = np.where(present[None, :], P, 0.0)
    sums = P.sum(axis=1, keepdims=True)
    fallback = present / present.sum()
    return np.where(sums > 0, P / np.where(sums > 0, sums, 1.0), fallback[None, :])


def out_of_fold(spec: LearnerSpec, table: FrameTable, Y, w, folds: FoldPlan, seed=0, X_test=None, n_threads=1,
                progress_bar_cmd=tqdm) -> OofPrediction:
    """Scores every block with a model fit on the other blocks' rows; optionally averages those models on X_test."""
    Y, w = check_targets(Y, w)
    Yv = Y.values
    X = table.features
    pids = table.participant_id
    unknown = set(np.unique(pids).tolist()) - set(folds.participants)
    if unknown:
        raise ValidationError(f"participants {sorted(unknown)} are not covered by the fold plan")
    n_classes = Yv.shape[1]
    values = np.zeros_like(Yv)
    producer = np.full(len(table), -1, dtype=np.int64)
    fitted_on, test_parts = [], []
    for b, block in enumerate(progress_bar_cmd(folds.blocks(), desc=f"Folds [{spec.name}]")):
        held = np.isin(pids, block)
        train_rows = np.flatnonzero(~held)
        if train_rows.size == 0:
            raise ValidationError(f"fold block {b} leaves no training rows")
        fl = fit_learner(spec, X[train_rows], Yv[train_rows], w, table.columns, seed=seed, n_threads=n_threads,
                         progress_bar_cmd=no_progress)
        present = Yv[train_rows].sum(axis=0) > 0
        if not present.all():
            log(f"[Stack] {spec.name} block {b}: classes {np.flatnonzero(~present).tolist()} absent from training; their columns are zeroed", message_type='warning')
        values[held] = _restrict_to_present(predict_learner(fl, X[held]).values, present)
        producer[held] = b
        fitted_on.append(tuple(sorted(set(np.unique(pids[train_rows]).tolist()))))
        if X_test is not None:
            test_parts.append(_restrict_to_present(predict_learner(fl, X_test).values, present))
    test_values = None
    if X_test is not None:
        test_values = average_predictions([ScoreMatrix(p, kind="probability") for p in test_parts]).values
    check_stochastic(values, f"out-of-fold predictions of {spec.name}")
    return OofPrediction(values=values, participant_id=np.asarray(pids), producer=producer,
                         fitted_on=tuple(fitted_on), test_values=test_values)


def room_probability_columns(n_rooms: int) -> List[str]:
    return [f"room_p{r}" for r in range(n_rooms)]


def stack_transfer(train: FrameTable, test: FrameTable, folds: FoldPlan, spec: LearnerSpec, n_rooms: Optional[int] = None,
                   seed=0, n_threads=1, progress_bar_cmd=tqdm):
    """Replaces the train-only room column by out-of-fold room probabilities on train and fold-averaged ones on test.

    Returns (train', test', OofPrediction); both tables carry identical feature columns.
    """
    if train.room is None or np.any(train.room < 0):
        raise ValidationError("stack transferring needs a known room on every training row")
    if test.room is not None and np.any(test.room >= 0):
        raise ValidationError("test table must not carry room values")
    if train.columns != test.columns:
        raise ValidationError("train and test tables must share feature columns")
    n_rooms = int(train.room.max()) + 1 if n_rooms is None else int(n_rooms)
    if train.room.max() >= n_rooms:
        raise ValidationError(f"room index {train.room.max()} out of range for {n_rooms} rooms")
    Y_aux = SoftLabelMatrix.one_hot(train.room, n_rooms)
    oof = out_of_fold(spec, train, Y_aux, ClassWeights.uniform(n_rooms), folds, seed=seed, X_test=test.features,
                      n_threads=n_threads, progress_bar_cmd=progress_bar_cmd)
    names = room_probability_columns(n_rooms)
    train_out = train.replace(room=None).with_columns(names, oof.values)
    test_out = test.replace(room=None).with_columns(names, oof.test_values)
    accuracy = float(np.mean(np.argmax(oof.values, axis=1) == train.room))
    log(f"[Stack] room transfer with {spec.name}: out-of-fold accuracy {accuracy:.4f}", message_type='info')
    return train_out, test_out, oof


ANCHOR_FLOOR = 1e-6


@dataclass(eq=False)
class StackedModel:
    level1: List[FittedLearner]
    stacker: BoostedEnsemble
    n_classes: int
    use_base_features: bool
    columns: Tuple[str, ...]
    anchor: Optional[np.ndarray] = None
    report: Dict[str, float] = field(default_factory=dict)
    holdout_prediction: Optional[ScoreMatrix] = None


def _stack_inputs(level1_values: Sequence[np.ndarray], base: Optional[np.ndarray]) -> np.ndarray:
    stacked = rearrange(np.stack(level1_values), "m n c -> n (m c)")
    return stacked if base is None else np.hstack([stacked, base])


def _anchor_margin(level1_values: Sequence[np.ndarray], anchor: np.ndarray) -> np.ndarray:
    """Log of the anchor blend of level-1 probabilities; the stacker boosts on top of it."""
    blend = np.tensordot(anchor, np.stack(level1_values), axes=1)
    return np.log(np.clip(blend, ANCHOR_FLOOR, None))


def fit_stack(specs: Sequence[LearnerSpec], folds: FoldPlan, train: FrameTable, Y, w, grid: Dict[str, Sequence] = None,
              base: Optional[BoostConfig] = None, use_base_features=False, seed=0, n_threads=1,
              progress_bar_cmd=tqdm) -> StackedModel:
    """Level-1 out-of-fold columns feed a grid-searched booster; level-1 models are then refit on all rows.

    The booster starts from the margin of an anchor blend: whichever single level-1 learner, or their plain
    average, scores best on the holdout. Early stopping can keep zero rounds, so the stack never scores worse
    on the holdout than that anchor.
    """
    if len(specs) < 2:
        raise ValidationError(f"stacking needs at least 2 level-1 learners, got {len(specs)}")
    names = [s.name for s in specs]
    if len(set(names)) != len(names):
        raise ValidationError(f"level-1 learner names must be unique, got {names}")
    Y, w = check_targets(Y, w)
    base = BoostConfig(early_stopping_rounds=20) if base is None else base

    survivors, oofs = [], []
    for spec in specs:
        try:
            oofs.append(out_of_fold(spec, train, Y, w, folds, seed=seed, n_threads=n_threads,
                                    progress_bar_cmd=progress_bar_cmd))
            survivors.append(spec)
        except SoftBrierError as e:
            log(f"[Stack] level-1 learner {spec.name} dropped: {e}", message_type='warning')
    if len(survivors) < 2:
        raise ValidationError(f"only {len(survivors)} level-1 learner(s) survived; stacking needs 2")

    Z = _stack_inputs([o.values for o in oofs], train.features if use_base_features else None)
    held = np.isin(train.participant_id, folds.holdout)
    fit_rows, valid_rows = np.flatnonzero(~held), np.flatnonzero(held)
    Yv = Y.values
    level1_values = [o.values for o in oofs]
    n_models = len(level1_values)
    anchors = [np.eye(n_models)[m] for m in range(n_models)] + [np.full(n_models, 1.0 / n_models)]
    report = {}
    if valid_rows.size:
        for spec, o in zip(survivors, oofs):
            report[f"holdout_brier[{spec.name}]"] = brier_score(o.values[valid_rows], Yv[valid_rows], w)
        held_values = np.stack([v[valid_rows] for v in level1_values])
        scores = [brier_score(np.tensordot(a, held_values, axes=1), Yv[valid_rows], w) for a in anchors]
        anchor = anchors[int(np.argmin(scores))]
        margin = _anchor_margin(level1_values, anchor)
        cfg, _ = grid_search(grid or {}, Z[fit_rows], Yv[fit_rows], w, Z[valid_rows], Yv[valid_rows], base=base,
                             n_threads=n_threads, progress_bar_cmd=progress_bar_cmd, init_train=margin[fit_rows],
                             init_valid=margin[valid_rows])
        stacker = fit_gbdt(Z[fit_rows], Yv[fit_rows], w, cfg, Z[valid_rows], Yv[valid_rows], n_threads=n_threads,
                           progress_bar_cmd=no_progress, init_train=margin[fit_rows], init_valid=margin[valid_rows])
        holdout_pred = gbdt_predict(stacker, Z[valid_rows], init=margin[valid_rows])
        log(f"[Stack] anchor weights {anchor.round(4).tolist()}, stacker keeps {stacker.best_round} round(s)", message_type='info')
        report["holdout_brier[stack]"] = brier_score(holdout_pred, Yv[valid_rows], w)
    else:
        if grid:
            log("[Stack] no holdout block; grid ignored and the base stacker config is used", message_type='warning')
        anchor = anchors[-1]
        cfg = BoostConfig.from_dict({**base.to_dict(), "early_stopping_rounds": 0})
        stacker = fit_gbdt(Z, Yv, w, cfg, n_threads=n_threads, progress_bar_cmd=no_progress,
                           init_train=_anchor_margin(level1_values, anchor))
        holdout_pred = None
    for key, value in report.items():
        log(f"[Stack] {key} = {value:.6f}", message_type='info')

    level1 = [fit_learner(spec, train.features, Yv, w, train.columns, seed=seed, n_threads=n_threads,
                          progress_bar_cmd=no_progress) for spec in survivors]
    return StackedModel(level1=level1, stacker=stacker, n_classes=Yv.shape[1], use_base_features=use_base_features,
                        columns=tuple(train.columns), anchor=anchor, report=report, holdout_prediction=holdout_pred)


def stack_predict(sm: StackedModel, X) -> ScoreMatrix:
    if isinstance(X, FrameTable):
        if X.columns != sm.columns:
            raise ValidationError("table columns differ from the columns the stack was trained on")
        X = X.features
    X = np.asarray(X, dtype=np.float64)
    if X.ndim != 2 or X.shape[1] != len(sm.columns):
        raise ValidationError(f"expected {len(sm.columns)} features, got shape {X.shape}")
    level1 = [predict_learner(fl, X).values for fl in sm.level1]
    Z = _stack_inputs(level1, X if sm.use_base_features else None)
    anchor = np.full(len(level1), 1.0 / len(level1)) if sm.anchor is None else sm.anchor
    return gbdt_predict(sm.stacker, Z, init=_anchor_margin(level1, anchor))


def average_predictions(predictions: Sequence) -> ScoreMatrix:
    if not predictions:
        raise ValidationError("average_predictions needs at least one matrix")
    arrays = [values_of(p) for p in predictions]
    shapes = {a.shape for a in arrays}
    if len(shapes) != 1:
        raise ValidationError(f"prediction shapes differ: {sorted(shapes)}")
    mean = reduce(np.stack(arrays), "m n c -> n c", "mean")
    return ScoreMatrix(mean, kind="probability")
