from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field, replace
from typing import List

import numpy as np
from tqdm import tqdm

from ..data.frame import ScoreMatrix
from ..errors import ValidationError
from ..objectives.brier import check_targets
from ..utils import as_rng
from .tree import Tree, TreeConfig, _check_matrix, build_probability_tree


@dataclass
class ForestConfig:
    n_trees: int = 100
    bootstrap: bool = True
    tree: TreeConfig = field(default_factory=lambda: TreeConfig(max_depth=8, min_child_weight=1.0, reg_lambda=0.0))

    @classmethod
    def extra_trees(cls, n_trees=100, tree: TreeConfig = None) -> "ForestConfig":
        tree = TreeConfig(max_depth=8, reg_lambda=0.0) if tree is None else tree
        return cls(n_trees=n_trees, bootstrap=False, tree=replace(tree, randomized_thresholds=True))

    def validate(self):
        if int(self.n_trees) != self.n_trees or self.n_trees < 1:
            raise ValidationError(f"n_trees must be an integer >= 1, got {self.n_trees}")
        self.tree.validate()
        return self

    def to_dict(self):
        return asdict(self)

    @classmethod
    def from_dict(cls, data):
        data = dict(data)
        tree = TreeConfig(**data.pop("tree", {}))
        return cls(tree=tree, **data)


@dataclass(eq=False)
class Forest:
    trees: List[Tree]
    config: ForestConfig
    n_classes: int
    n_features: int


def fit_forest(X, Y, w, cfg: ForestConfig, n_threads=1, progress_bar_cmd=tqdm) -> Forest:
    cfg.validate()
    X = _check_matrix(X)
    Y, w = check_targets(Y, w)
    if Y.shape[0] != X.shape[0]:
        raise ValidationError(f"{Y.shape[0]} label rows for {X.shape[0]} feature rows")
    n = X.shape[0]

    def fit_one(i):
        tree_cfg = replace(cfg.tree, seed=cfg.tree.seed + i)
        sample = as_rng(tree_cfg.seed).integers(0, n, size=n) if cfg.bootstrap else None
        return build_probability_tree(X, Y, w, tree_cfg, bootstrap_indices=sample)

    indices = progress_bar_cmd(range(cfg.n_trees), desc="Forest trees")
    if n_threads > 1:
        with ThreadPoolExecutor(max_workers=n_threads) as pool:
            trees = list(pool.map(fit_one, indices))
    else:
        trees = [fit_one(i) for i in indices]
    return Forest(trees=trees, config=cfg, n_classes=Y.shape[1], n_features=X.shape[1])


def forest_predict(f: Forest, X) -> ScoreMatrix:
    X = _check_matrix(X, f.n_features)
    total = np.zeros((X.shape[0], f.n_classes))
    for tree in f.trees:
        total += tree.predict(X)
    return ScoreMatrix(total / len(f.trees), kind="probability")
