import zlib
from dataclasses import dataclass, field, fields, replace
from typing import Dict, Optional, Sequence

import numpy as np
from tqdm import tqdm

from ..data.frame import ScoreMatrix, harden_labels, is_lag_lead_column
from ..errors import ValidationError
from ..objectives.brier import check_targets
from .forest import Forest, ForestConfig, fit_forest, forest_predict
from .gbdt import BoostConfig, BoostedEnsemble, fit_gbdt, gbdt_predict
from .naive_bayes import GaussianNB, MeanImputer, fit_gaussian_nb, nb_predict
from .tree import TreeConfig

LEARNER_KINDS = ("gbdt_brier", "gbdt_logloss", "forest", "extra_trees", "naive_bayes")

_TREE_KEYS = {f.name for f in fields(TreeConfig)}
_BOOST_KEYS = {f.name for f in fields(BoostConfig)} - {"tree", "objective"}
_FOREST_KEYS = {"n_trees"}


def spec_seed(name: str, seed: int) -> int:
    """Seed derived from a learner name, independent of where the learner sits in a zoo."""
    return (int(seed) + zlib.crc32(name.encode("utf-8"))) % (2 ** 31)


@dataclass
class LearnerSpec:
    name: str
    kind: str
    params: Dict[str, object] = field(default_factory=dict)
    drop_lag_lead: bool = False

    def validate(self):
        if not self.name:
            raise ValidationError("learner name must not be empty")
        if self.kind not in LEARNER_KINDS:
            raise ValidationError(f"learner {self.name!r}: unknown kind {self.kind!r}, expected one of {LEARNER_KINDS}")
        allowed = set()
        if self.kind.startswith("gbdt"):
            allowed = _TREE_KEYS | _BOOST_KEYS
        elif self.kind in ("forest", "extra_trees"):
            allowed = _TREE_KEYS | _FOREST_KEYS
        unknown = set(self.params) - allowed
        if unknown:
            raise ValidationError(f"learner {self.name!r}: unknown parameters {sorted(unknown)}")
        return self

    def select(self, columns: Sequence[str]) -> np.ndarray:
        keep = [i for i, name in enumerate(columns) if not (self.drop_lag_lead and is_lag_lead_column(name))]
        return np.asarray(keep, dtype=np.int64)

    def boost_config(self, seed: int) -> BoostConfig:
        tree = {k: v for k, v in self.params.items() if k in _TREE_KEYS}
        boost = {k: v for k, v in self.params.items() if k in _BOOST_KEYS}
        objective = "softmax_brier" if self.kind == "gbdt_brier" else "softmax_logloss"
        boost.setdefault("seed", seed)
        return BoostConfig(tree=TreeConfig(**tree), objective=objective, **boost)

    def forest_config(self, seed: int) -> ForestConfig:
        tree = {k: v for k, v in self.params.items() if k in _TREE_KEYS}
        tree.setdefault("seed", seed)
        n_trees = self.params.get("n_trees", 100)
        defaults = ForestConfig().tree
        if self.kind == "extra_trees":
            return ForestConfig.extra_trees(n_trees=n_trees, tree=replace(defaults, **tree))
        return ForestConfig(n_trees=n_trees, tree=replace(defaults, **tree))

    def to_dict(self):
        return {"name": self.name, "kind": self.kind, "params": dict(self.params), "drop_lag_lead": self.drop_lag_lead}

    @classmethod
    def from_dict(cls, data):
        unknown = set(data) - {"name", "kind", "params", "drop_lag_lead"}
        if unknown:
            raise ValidationError(f"unknown learner keys {sorted(unknown)}")
        return cls(**data).validate()


@dataclass(eq=False)
class FittedLearner:
    spec: LearnerSpec
    model: object
    feature_index: np.ndarray
    n_classes: int
    imputer: Optional[MeanImputer] = None

    def predict(self, X) -> ScoreMatrix:
        return predict_learner(self, X)


def fit_learner(spec: LearnerSpec, X, Y, w, columns: Sequence[str], seed: int = 0, X_valid=None, Y_valid=None,
                n_threads=1, progress_bar_cmd=tqdm) -> FittedLearner:
    spec.validate()
    X = np.asarray(X, dtype=np.float64)
    if X.ndim != 2 or X.shape[1] != len(columns):
        raise ValidationError(f"learner {spec.name!r}: {len(columns)} column names for features of shape {X.shape}")
    Y, w = check_targets(Y, w)
    index = spec.select(columns)
    if index.size == 0:
        raise ValidationError(f"learner {spec.name!r} has no features left after column selection")
    X = X[:, index]
    Xv = None if X_valid is None else np.asarray(X_valid, dtype=np.float64)[:, index]
    seed = spec_seed(spec.name, seed)

    imputer = None
    if spec.kind.startswith("gbdt"):
        cfg = spec.boost_config(seed)
        if Xv is None:
            cfg = replace(cfg, early_stopping_rounds=0)
        model = fit_gbdt(X, Y, w, cfg, Xv, Y_valid if Xv is not None else None, n_threads=n_threads,
                         progress_bar_cmd=progress_bar_cmd)
    elif spec.kind in ("forest", "extra_trees"):
        model = fit_forest(X, Y, w, spec.forest_config(seed), n_threads=n_threads, progress_bar_cmd=progress_bar_cmd)
    else:
        imputer = MeanImputer.fit(X)
        model = fit_gaussian_nb(imputer.transform(X), harden_labels(Y), Y.shape[1])
    return FittedLearner(spec=spec, model=model, feature_index=index, n_classes=Y.shape[1], imputer=imputer)


def predict_learner(fl: FittedLearner, X) -> ScoreMatrix:
    X = np.asarray(X, dtype=np.float64)
    if X.ndim != 2 or (fl.feature_index.size and X.shape[1] <= fl.feature_index.max()):
        raise ValidationError(f"learner {fl.spec.name!r}: feature matrix of shape {X.shape} is too narrow")
    X = X[:, fl.feature_index]
    if isinstance(fl.model, BoostedEnsemble):
        return gbdt_predict(fl.model, X)
    if isinstance(fl.model, Forest):
        return forest_predict(fl.model, X)
    if isinstance(fl.model, GaussianNB):
        return nb_predict(fl.model, fl.imputer.transform(X))
    raise ValidationError(f"learner {fl.spec.name!r} holds an unsupported model {type(fl.model).__name__}")
