from dataclasses import asdict, dataclass
from typing import List, Optional, Sequence, Tuple

import numpy as np

from ..errors import ValidationError
from ..utils import as_rng

_MIN_GAIN = 1e-12


@dataclass
class TreeConfig:
    max_depth: int = 6
    # regression trees: minimum hessian sum per child; probability trees: minimum row count
    min_child_weight: float = 1.0
    reg_lambda: float = 1.0
    gamma: float = 0.0
    colsample: float = 1.0
    randomized_thresholds: bool = False
    seed: int = 0

    def validate(self):
        if int(self.max_depth) != self.max_depth or self.max_depth < 1:
            raise ValidationError(f"max_depth must be an integer >= 1, got {self.max_depth}")
        if self.min_child_weight < 0:
            raise ValidationError(f"min_child_weight must be >= 0, got {self.min_child_weight}")
        if self.reg_lambda < 0 or self.gamma < 0:
            raise ValidationError(f"reg_lambda and gamma must be >= 0, got {self.reg_lambda}, {self.gamma}")
        if not 0.0 < self.colsample <= 1.0:
            raise ValidationError(f"colsample must lie in (0, 1], got {self.colsample}")
        return self

    def to_dict(self):
        return asdict(self)


@dataclass(eq=False)
class Tree:
    """Array-of-nodes binary tree; leaves have feature == -1.

    `stats` holds (G, H) per node for regression trees and (rows, impurity) for probability trees.
    """
    kind: str
    feature: np.ndarray
    threshold: np.ndarray
    default_left: np.ndarray
    left: np.ndarray
    right: np.ndarray
    value: np.ndarray
    gain: np.ndarray
    stats: np.ndarray
    n_features: int

    @property
    def n_nodes(self) -> int:
        return self.feature.size

    @property
    def is_leaf(self) -> np.ndarray:
        return self.feature < 0

    @property
    def depth(self) -> int:
        depths = np.zeros(self.n_nodes, dtype=np.int64)
        for i in range(self.n_nodes):
            if self.feature[i] >= 0:
                depths[self.left[i]] = depths[i] + 1
                depths[self.right[i]] = depths[i] + 1
        return int(depths.max()) if self.n_nodes else 0

    def apply(self, X) -> np.ndarray:
        X = _check_matrix(X, self.n_features)
        node = np.zeros(X.shape[0], dtype=np.int64)
        active = np.flatnonzero(self.feature[node] >= 0)
        while active.size:
            nd = node[active]
            x = X[active, self.feature[nd]]
            go_left = np.where(np.isnan(x), self.default_left[nd], x < self.threshold[nd])
            node[active] = np.where(go_left, self.left[nd], self.right[nd])
            active = active[self.feature[node[active]] >= 0]
        return node

    def predict(self, X) -> np.ndarray:
        values = self.value[self.apply(X)]
        return values[:, 0] if self.kind == "regression" else values


def _check_matrix(X, n_features=None) -> np.ndarray:
    X = np.asarray(X, dtype=np.float64)
    if X.ndim != 2:
        raise ValidationError(f"feature matrix must be 2-D, got shape {X.shape}")
    if n_features is not None and X.shape[1] != n_features:
        raise ValidationError(f"expected {n_features} features, got {X.shape[1]}")
    return X


def presort(X: np.ndarray) -> np.ndarray:
    """Per-feature row order by value, NaN rows last."""
    return np.argsort(X, axis=0, kind="stable").T.copy()


def _midpoints(lo, hi):
    thr = (lo + hi) / 2.0
    # a midpoint rounded down onto `lo` would send `lo` to the right child
    return np.where(thr <= lo, hi, thr)


class _TreeBuilder:

    def __init__(self, X, cfg: TreeConfig, order=None):
        self.X = X
        self.cfg = cfg
        self.rng = as_rng(cfg.seed)
        n_features = X.shape[1]
        if cfg.colsample < 1.0 and n_features > 0:
            k = max(1, int(round(cfg.colsample * n_features)))
            self.features = np.sort(self.rng.choice(n_features, size=k, replace=False))
        else:
            self.features = np.arange(n_features)
        self.order = presort(X) if order is None else order
        self.nodes = []

    def build(self, rows, kind, n_values):
        rows = np.asarray(rows, dtype=np.int64)
        self._grow(rows, 0)
        n = len(self.nodes)
        tree = Tree(
            kind=kind,
            feature=np.array([nd["feature"] for nd in self.nodes], dtype=np.int64),
            threshold=np.array([nd["threshold"] for nd in self.nodes], dtype=np.float64),
            default_left=np.array([nd["default_left"] for nd in self.nodes], dtype=bool),
            left=np.array([nd["left"] for nd in self.nodes], dtype=np.int64),
            right=np.array([nd["right"] for nd in self.nodes], dtype=np.int64),
            value=np.array([nd["value"] for nd in self.nodes], dtype=np.float64).reshape(n, n_values),
            gain=np.array([nd["gain"] for nd in self.nodes], dtype=np.float64),
            stats=np.array([nd["stats"] for nd in self.nodes], dtype=np.float64).reshape(n, 2),
            n_features=self.X.shape[1],
        )
        return tree

    def _grow(self, rows, depth):
        node_id = len(self.nodes)
        value, stats = self.leaf(rows)
        node = dict(feature=-1, threshold=0.0, default_left=True, left=-1, right=-1, value=value, gain=0.0, stats=stats)
        self.nodes.append(node)
        split = None
        if depth < self.cfg.max_depth and rows.size >= 2:
            in_node = np.zeros(self.X.shape[0], dtype=bool)
            in_node[rows] = True
            split = self.find_split(rows, in_node, stats)
        if split is None:
            return node_id
        gain, f, thr, default_left = split
        x = self.X[rows, f]
        go_left = np.where(np.isnan(x), default_left, x < thr)
        node.update(feature=int(f), threshold=float(thr), default_left=bool(default_left), gain=float(gain))
        node["left"] = self._grow(rows[go_left], depth + 1)
        node["right"] = self._grow(rows[~go_left], depth + 1)
        return node_id

    def sorted_node_rows(self, f, in_node):
        order = self.order[f]
        ordered = order[in_node[order]]
        x = self.X[ordered, f]
        n_present = int(np.count_nonzero(~np.isnan(x)))
        return ordered, x, n_present


class _RegressionBuilder(_TreeBuilder):

    def __init__(self, X, g, h, cfg, order=None):
        super().__init__(X, cfg, order)
        self.g = g
        self.h = h

    def leaf(self, rows):
        G = float(np.sum(self.g[rows]))
        H = float(np.sum(self.h[rows]))
        return [-G / (H + self.cfg.reg_lambda)], [G, H]

    def _score(self, G, H):
        return G * G / (H + self.cfg.reg_lambda)

    def find_split(self, rows, in_node, stats):
        G, H = stats
        lam, mcw = self.cfg.reg_lambda, self.cfg.min_child_weight
        parent = self._score(G, H)
        best = None
        for f in self.features:
            ordered, x, n_p = self.sorted_node_rows(f, in_node)
            if n_p == 0:
                continue
            present, missing = ordered[:n_p], ordered[n_p:]
            xs = x[:n_p]
            cg = np.cumsum(self.g[present])
            ch = np.cumsum(self.h[present])
            G_miss = float(np.sum(self.g[missing]))
            H_miss = float(np.sum(self.h[missing]))
            n_miss = missing.size

            cut = np.flatnonzero(xs[1:] != xs[:-1]) + 1
            thr = _midpoints(xs[cut - 1], xs[cut])
            GL, HL, nL = cg[cut - 1], ch[cut - 1], cut.astype(np.float64)
            if n_miss:
                # present values all go right, missing rows alone go left
                thr = np.concatenate([[xs[0]], thr])
                GL = np.concatenate([[0.0], GL])
                HL = np.concatenate([[0.0], HL])
                nL = np.concatenate([[0.0], nL])
            if thr.size == 0:
                continue

            gains = []
            for miss_left in (True, False):
                gl = GL + G_miss if miss_left else GL
                hl = HL + H_miss if miss_left else HL
                nl = nL + n_miss if miss_left else nL
                gr, hr, nr = G - gl, H - hl, rows.size - nl
                gain = 0.5 * (gl * gl / (hl + lam) + gr * gr / (hr + lam) - parent)
                ok = (nl > 0) & (nr > 0) & (hl >= mcw) & (hr >= mcw)
                gains.append(np.where(ok, gain, -np.inf))
            use_left = gains[0] >= gains[1]
            gain = np.where(use_left, gains[0], gains[1])
            j = int(np.argmax(gain))
            if gain[j] - self.cfg.gamma <= _MIN_GAIN:
                continue
            if best is None or gain[j] > best[0]:
                best = (float(gain[j]), int(f), float(thr[j]), bool(use_left[j]))
        return best


class _ProbabilityBuilder(_TreeBuilder):

    def __init__(self, X, Y, w, cfg, order=None):
        super().__init__(X, cfg, order)
        self.Y = Y
        self.w = w

    def _impurity(self, s1, s2, n):
        # sum_c w_c (sum y^2 - (sum y)^2 / n), vectorized over leading axes
        n = np.asarray(n, dtype=np.float64)
        safe = np.where(n > 0, n, 1.0)
        return np.sum(self.w * (s2 - s1 * s1 / safe[..., None]), axis=-1)

    def leaf(self, rows):
        Y = self.Y[rows]
        s1, s2 = Y.sum(axis=0), (Y * Y).sum(axis=0)
        impurity = float(self._impurity(s1, s2, rows.size))
        return (s1 / rows.size).tolist(), [float(rows.size), impurity]

    def find_split(self, rows, in_node, stats):
        n_rows, parent = stats
        mcw = self.cfg.min_child_weight
        Y = self.Y
        total1 = Y[rows].sum(axis=0)
        total2 = (Y[rows] * Y[rows]).sum(axis=0)
        best = None
        for f in self.features:
            ordered, x, n_p = self.sorted_node_rows(f, in_node)
            if n_p == 0:
                continue
            present, missing = ordered[:n_p], ordered[n_p:]
            xs = x[:n_p]
            n_miss = missing.size
            m1 = Y[missing].sum(axis=0)
            m2 = (Y[missing] * Y[missing]).sum(axis=0)

            if self.cfg.randomized_thresholds:
                if xs[0] == xs[-1]:
                    continue
                t = float(self.rng.uniform(xs[0], xs[-1]))
                if t <= xs[0]:
                    continue
                cut = np.array([int(np.searchsorted(xs, t, side="left"))])
                thr = np.array([t])
            else:
                cut = np.flatnonzero(xs[1:] != xs[:-1]) + 1
                thr = _midpoints(xs[cut - 1], xs[cut])
            cy1 = np.cumsum(Y[present], axis=0)
            cy2 = np.cumsum(Y[present] * Y[present], axis=0)
            L1, L2 = cy1[cut - 1], cy2[cut - 1]
            nL = cut.astype(np.float64)
            # majority side of the present rows takes the missing rows, ties left
            miss_left = nL >= (n_p - nL)
            L1 = L1 + np.where(miss_left[:, None], m1, 0.0)
            L2 = L2 + np.where(miss_left[:, None], m2, 0.0)
            nL = nL + np.where(miss_left, n_miss, 0)
            if n_miss and not self.cfg.randomized_thresholds:
                thr = np.concatenate([[xs[0]], thr])
                L1 = np.vstack([m1[None, :], L1])
                L2 = np.vstack([m2[None, :], L2])
                nL = np.concatenate([[float(n_miss)], nL])
                miss_left = np.concatenate([[True], miss_left])
            if thr.size == 0:
                continue
            nR = rows.size - nL
            decrease = parent - self._impurity(L1, L2, nL) - self._impurity(total1 - L1, total2 - L2, nR)
            ok = (nL >= max(mcw, 1)) & (nR >= max(mcw, 1))
            decrease = np.where(ok, decrease, -np.inf)
            j = int(np.argmax(decrease))
            if decrease[j] - self.cfg.gamma <= _MIN_GAIN:
                continue
            if best is None or decrease[j] > best[0]:
                best = (float(decrease[j]), int(f), float(thr[j]), bool(miss_left[j]))
        return best


def build_regression_tree(X, g, h, cfg: TreeConfig, rows=None, order=None) -> Tree:
    """Second-order regression tree with Newton leaf weights -G / (H + lambda).

    `rows` restricts fitting to a row subset of X; `order` reuses a `presort(X)` result.
    """
    cfg.validate()
    X = _check_matrix(X)
    g = np.asarray(g, dtype=np.float64)
    h = np.asarray(h, dtype=np.float64)
    if X.shape[0] == 0:
        raise ValidationError("cannot build a tree on an empty feature matrix")
    if g.shape != (X.shape[0],) or h.shape != (X.shape[0],):
        raise ValidationError(f"gradient/hessian length must equal {X.shape[0]} rows")
    if np.any(h < 0):
        raise ValidationError("hessians must be non-negative")
    rows = np.arange(X.shape[0]) if rows is None else np.asarray(rows, dtype=np.int64)
    if rows.size == 0:
        raise ValidationError("cannot build a tree on an empty row subset")
    return _RegressionBuilder(X, g, h, cfg, order).build(rows, "regression", 1)


def build_probability_tree(X, Y, w, cfg: TreeConfig, bootstrap_indices=None) -> Tree:
    """Soft-label probability tree split by weighted Brier impurity; leaves store mean soft labels."""
    cfg.validate()
    X = _check_matrix(X)
    Y = np.asarray(getattr(Y, "values", Y), dtype=np.float64)
    w = np.asarray(getattr(w, "weights", w), dtype=np.float64)
    if Y.shape[0] != X.shape[0]:
        raise ValidationError(f"{Y.shape[0]} label rows for {X.shape[0]} feature rows")
    if bootstrap_indices is not None:
        bootstrap_indices = np.asarray(bootstrap_indices, dtype=np.int64)
        if bootstrap_indices.size == 0:
            raise ValidationError("bootstrap sample is empty")
        X, Y = X[bootstrap_indices], Y[bootstrap_indices]
    if X.shape[0] == 0:
        raise ValidationError("cannot build a tree on an empty node")
    return _ProbabilityBuilder(X, Y, w, cfg).build(np.arange(X.shape[0]), "probability", Y.shape[1])


def tree_predict(t: Tree, row):
    row = np.asarray(row, dtype=np.float64)
    if row.ndim != 1 or row.size != t.n_features:
        raise ValidationError(f"expected a row of {t.n_features} features, got shape {row.shape}")
    out = t.predict(row[None, :])[0]
    return float(out) if t.kind == "regression" else out


def tree_predict_batch(t: Tree, X) -> np.ndarray:
    return t.predict(X)


def audit_tree(t: Tree, cfg: TreeConfig) -> List[str]:
    """Recomputes regression split gains from child statistics; returns violations."""
    problems = []
    if t.kind != "regression":
        return problems
    lam = cfg.reg_lambda
    for i in np.flatnonzero(t.feature >= 0):
        (GL, HL), (GR, HR) = t.stats[t.left[i]], t.stats[t.right[i]]
        G, H = GL + GR, HL + HR
        gain = 0.5 * (GL * GL / (HL + lam) + GR * GR / (HR + lam) - G * G / (H + lam))
        if gain < cfg.gamma - 1e-9:
            problems.append(f"node {i}: gain {gain:.6g} below gamma {cfg.gamma}")
        if not np.isclose(gain, t.gain[i], rtol=1e-6, atol=1e-9):
            problems.append(f"node {i}: stored gain {t.gain[i]:.6g} differs from recomputed {gain:.6g}")
    return problems


def feature_importance(trees: Sequence[Tree], names: Sequence[str]) -> List[Tuple[str, float]]:
    """Total split gain per feature, normalized to sum 1, sorted descending then by name."""
    if not trees:
        raise ValidationError("feature_importance needs at least one tree")
    totals = np.zeros(len(names))
    for t in trees:
        if t.n_features != len(names):
            raise ValidationError(f"tree has {t.n_features} features, {len(names)} names given")
        split = t.feature >= 0
        np.add.at(totals, t.feature[split], t.gain[split])
    total = totals.sum()
    shares = totals / total if total > 0 else totals
    return sorted(zip(names, shares.tolist()), key=lambda item: (-item[1], item[0]))


def format_importance_table(ranked, top: Optional[int] = 15, metric: str = "total gain") -> str:
    rows = ranked if top is None else ranked[:top]
    width = max([len("Feature name")] + [len(name) for name, _ in rows])
    lines = [
        f"Importance metric: {metric}",
        f"| {'Feature name'.ljust(width)} | Importance (%) |",
        f"|{'-' * (width + 2)}|----------------|",
    ]
    for name, share in rows:
        lines.append(f"| {name.ljust(width)} | {100.0 * share:14.4f} |")
    return "\n".join(lines)
