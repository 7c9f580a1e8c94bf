import itertools
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field, fields, replace
from typing import Dict, List, Optional, Sequence

import numpy as np
import pandas as pd
from tqdm import tqdm

from ..errors import NumericError, SoftBrierError, ValidationError
from ..objectives.brier import HESS_MIN, OBJECTIVES, brier_score, check_targets, softmax_rows
from ..utils import as_rng, log, no_progress
from .tree import Tree, TreeConfig, _check_matrix, build_regression_tree, presort


@dataclass
class BoostConfig:
    n_rounds_max: int = 200
    learning_rate: float = 0.1
    subsample: float = 1.0
    tree: TreeConfig = field(default_factory=TreeConfig)
    objective: str = "softmax_brier"
    early_stopping_rounds: int = 0
    seed: int = 0
    hess_min: float = HESS_MIN

    def validate(self):
        if int(self.n_rounds_max) != self.n_rounds_max or self.n_rounds_max < 0:
            raise ValidationError(f"n_rounds_max must be a non-negative integer, got {self.n_rounds_max}")
        if not 0.0 <= self.learning_rate <= 1.0:
            raise ValidationError(f"learning_rate must lie in [0, 1], got {self.learning_rate}")
        if not 0.0 < self.subsample <= 1.0:
            raise ValidationError(f"subsample must lie in (0, 1], got {self.subsample}")
        if self.objective not in OBJECTIVES:
            raise ValidationError(f"unknown objective {self.objective!r}, expected one of {sorted(OBJECTIVES)}")
        if self.early_stopping_rounds < 0:
            raise ValidationError(f"early_stopping_rounds must be >= 0, got {self.early_stopping_rounds}")
        self.tree.validate()
        return self

    def to_dict(self):
        return asdict(self)

    @classmethod
    def from_dict(cls, data):
        data = dict(data)
        tree = TreeConfig(**data.pop("tree", {}))
        known = {f.name for f in fields(cls)}
        unknown = set(data) - known
        if unknown:
            raise ValidationError(f"unknown boost config keys {sorted(unknown)}")
        return cls(tree=tree, **data)


@dataclass(eq=False)
class BoostedEnsemble:
    rounds: List[List[Tree]]
    base_score: np.ndarray
    config: BoostConfig
    best_round: int
    n_classes: int
    n_features: int
    history: Dict[str, List[float]] = field(default_factory=dict)

    @property
    def n_rounds(self) -> int:
        return len(self.rounds)

    def trees(self) -> List[Tree]:
        return [t for rnd in self.rounds for t in rnd]


def _tree_config_for(cfg: BoostConfig, rnd: int, c: int, n_classes: int) -> TreeConfig:
    return replace(cfg.tree, seed=cfg.seed + 1 + rnd * n_classes + c)


def _subsample(rng, n, fraction):
    if fraction >= 1.0:
        return np.arange(n)
    size = int(round(fraction * n))
    if size == 0:
        raise ValidationError(f"subsample {fraction} of {n} rows is empty")
    return np.sort(rng.choice(n, size=size, replace=False))


def _margin(init, n, n_classes):
    if init is None:
        return np.zeros((n, n_classes))
    init = np.asarray(init, dtype=np.float64)
    if init.shape != (n, n_classes):
        raise ValidationError(f"initial margin must have shape {(n, n_classes)}, got {init.shape}")
    if not np.all(np.isfinite(init)):
        raise NumericError("initial margin contains non-finite values")
    return init


def _add_round(F, trees, X, lr):
    for c, tree in enumerate(trees):
        F[:, c] += lr * tree.predict(X)


def fit_gbdt(X_train, Y_train, w, cfg: BoostConfig, X_valid=None, Y_valid=None, n_threads=1,
             progress_bar_cmd=tqdm, init_train=None, init_valid=None) -> BoostedEnsemble:
    """Multi-class boosting: one regression tree per class per round over soft targets.

    `init_train`/`init_valid` are optional per-row raw offsets (a base margin) added under the trees; the
    same offsets must be passed to `gbdt_raw_scores` at prediction time.
    """
    cfg.validate()
    X = _check_matrix(X_train)
    Y, w = check_targets(Y_train, w)
    Y = Y.values
    n, n_classes = Y.shape
    if X.shape[0] != n:
        raise ValidationError(f"{X.shape[0]} feature rows for {n} label rows")
    if n == 0:
        raise ValidationError("cannot fit on an empty training set")
    has_valid = X_valid is not None and Y_valid is not None
    if cfg.early_stopping_rounds and not has_valid:
        raise ValidationError("early stopping needs a validation set")
    if has_valid:
        Xv = _check_matrix(X_valid, X.shape[1])
        Yv, _ = check_targets(Y_valid, w)
        Yv = Yv.values
        if Xv.shape[0] != Yv.shape[0] or Yv.shape[1] != n_classes:
            raise ValidationError("validation features and labels do not match")

    objective = OBJECTIVES[cfg.objective]
    rng = as_rng(cfg.seed)
    order = presort(X)
    base = np.zeros(n_classes)
    F = np.tile(base, (n, 1)) + _margin(init_train, n, n_classes)
    Fv = np.tile(base, (Xv.shape[0], 1)) + _margin(init_valid, Xv.shape[0], n_classes) if has_valid else None

    history = {"train_brier": [brier_score(softmax_rows(F), Y, w)]}
    if has_valid:
        history["valid_brier"] = [brier_score(softmax_rows(Fv), Yv, w)]
    best_round, best_score, stale = 0, history.get("valid_brier", [np.inf])[0], 0
    rounds = []

    pool = ThreadPoolExecutor(max_workers=n_threads) if n_threads > 1 else None
    try:
        for rnd in progress_bar_cmd(range(cfg.n_rounds_max), desc="Boosting rounds"):
            try:
                gh = objective(F, Y, w.weights, hess_min=cfg.hess_min)
            except NumericError as e:
                raise NumericError(f"round {rnd}: {e}") from e
            rows = _subsample(rng, n, cfg.subsample)

            def fit_class(c):
                return build_regression_tree(X, gh.grad[:, c], gh.hess[:, c],
                                             _tree_config_for(cfg, rnd, c, n_classes), rows=rows, order=order)

            if pool is None:
                trees = [fit_class(c) for c in range(n_classes)]
            else:
                trees = list(pool.map(fit_class, range(n_classes)))
            for c, tree in enumerate(trees):
                if not np.all(np.isfinite(tree.value)):
                    raise NumericError(f"round {rnd}, class {c}: non-finite leaf weights")
            _add_round(F, trees, X, cfg.learning_rate)
            rounds.append(trees)

            train_score = brier_score(softmax_rows(F), Y, w)
            if cfg.subsample >= 1.0 and train_score > history["train_brier"][-1] + 1e-12:
                log(f"[GBDT] round {rnd + 1}: train Brier rose from {history['train_brier'][-1]:.6f} to {train_score:.6f}", message_type='warning')
            history["train_brier"].append(train_score)

            if has_valid:
                _add_round(Fv, trees, Xv, cfg.learning_rate)
                score = brier_score(softmax_rows(Fv), Yv, w)
                history["valid_brier"].append(score)
                if score < best_score:
                    best_round, best_score, stale = rnd + 1, score, 0
                else:
                    stale += 1
                if cfg.early_stopping_rounds and stale >= cfg.early_stopping_rounds:
                    log(f"[GBDT] early stop at round {rnd + 1}, best round {best_round} (valid Brier {best_score:.6f})", message_type='info')
                    break
    finally:
        if pool is not None:
            pool.shutdown()

    if not has_valid:
        best_round = len(rounds)
    return BoostedEnsemble(rounds=rounds, base_score=base, config=cfg, best_round=best_round,
                           n_classes=n_classes, n_features=X.shape[1], history=history)


def gbdt_raw_scores(m: BoostedEnsemble, X, at_round: Optional[int] = None, init=None) -> np.ndarray:
    X = _check_matrix(X, m.n_features)
    at_round = m.best_round if at_round is None else at_round
    if int(at_round) != at_round or not 0 <= at_round <= m.n_rounds:
        raise ValidationError(f"at_round must lie in [0, {m.n_rounds}], got {at_round}")
    F = np.tile(m.base_score, (X.shape[0], 1)) + _margin(init, X.shape[0], m.n_classes)
    for trees in m.rounds[:at_round]:
        _add_round(F, trees, X, m.config.learning_rate)
    return F


def gbdt_predict(m: BoostedEnsemble, X, at_round: Optional[int] = None, init=None):
    return softmax_rows(gbdt_raw_scores(m, X, at_round, init=init))


@dataclass
class GridResult:
    config_id: int
    params: Dict[str, object]
    valid_brier: float
    best_round: int
    error: Optional[str] = None
    max_depth: int = 0


_TREE_FIELDS = {f.name for f in fields(TreeConfig)}
_BOOST_FIELDS = {f.name for f in fields(BoostConfig)} - {"tree"}


def expand_grid(base: BoostConfig, grid: Dict[str, Sequence]):
    """Cartesian product of grid values applied to `base`, in grid order (last key varies fastest)."""
    if not grid:
        yield {}, base
        return
    keys = list(grid.keys())
    for key in keys:
        if key not in _TREE_FIELDS and key not in _BOOST_FIELDS:
            raise ValidationError(f"unknown grid parameter {key!r}")
        if len(grid[key]) == 0:
            raise ValidationError(f"grid parameter {key!r} has no values")
    for combo in itertools.product(*(grid[k] for k in keys)):
        params = dict(zip(keys, combo))
        tree_changes = {k: v for k, v in params.items() if k in _TREE_FIELDS}
        boost_changes = {k: v for k, v in params.items() if k in _BOOST_FIELDS}
        cfg = replace(base, tree=replace(base.tree, **tree_changes), **boost_changes)
        yield params, cfg


def grid_search(grid: Dict[str, Sequence], X_train, Y_train, w, X_valid, Y_valid, base: Optional[BoostConfig] = None,
                n_threads=1, progress_bar_cmd=tqdm, init_train=None, init_valid=None):
    """Exhaustive search; best = lowest validation Brier, then fewer rounds, then lower depth, then grid order."""
    base = BoostConfig() if base is None else base
    candidates = list(expand_grid(base, grid))
    table, configs = [], {}
    for config_id, (params, cfg) in enumerate(progress_bar_cmd(candidates, desc="Grid search")):
        try:
            m = fit_gbdt(X_train, Y_train, w, cfg, X_valid, Y_valid, n_threads=n_threads,
                         progress_bar_cmd=no_progress, init_train=init_train, init_valid=init_valid)
            score = float(m.history["valid_brier"][m.best_round])
            table.append(GridResult(config_id, params, score, m.best_round, max_depth=cfg.tree.max_depth))
            configs[config_id] = cfg
            log(f"[Grid] config {config_id} {params}: valid Brier {score:.6f} at round {m.best_round}", message_type='normal')
        except SoftBrierError as e:
            log(f"[Grid] config {config_id} {params} failed: {e}", message_type='warning')
            table.append(GridResult(config_id, params, float("nan"), -1, error=str(e), max_depth=cfg.tree.max_depth))
    return configs[select_grid_result(table).config_id], table


def select_grid_result(table: List[GridResult]) -> GridResult:
    ok = [r for r in table if r.error is None]
    if not ok:
        raise ValidationError("every grid configuration failed")
    return min(ok, key=lambda r: (r.valid_brier, r.best_round, r.max_depth, r.config_id))


def grid_table_frame(table: List[GridResult]) -> pd.DataFrame:
    rows = []
    for r in table:
        row = {"config_id": r.config_id}
        row.update(r.params)
        row.update(valid_brier=r.valid_brier, best_round=r.best_round)
        rows.append(row)
    return pd.DataFrame(rows)
