from dataclasses import dataclass

import numpy as np
from scipy.optimize import minimize_scalar

from ..data.frame import FrameTable, ScoreMatrix, values_of
from ..errors import ValidationError
from ..objectives.brier import brier_score
from ..utils import log

OFFSETS = (-2, -1, 0, 1, 2)


@dataclass(frozen=True, eq=False)
class SmoothKernel:
    weights: np.ndarray

    def __post_init__(self):
        weights = np.array(self.weights, dtype=np.float64)
        if weights.shape != (len(OFFSETS),):
            raise ValidationError(f"kernel needs {len(OFFSETS)} weights, got shape {weights.shape}")
        if np.any(weights < 0) or not np.all(np.isfinite(weights)):
            raise ValidationError(f"kernel weights must be finite and >= 0, got {weights.tolist()}")
        if abs(weights.sum() - 1.0) > 1e-9:
            raise ValidationError(f"kernel weights must sum to 1, got {weights.sum()!r}")
        weights.flags.writeable = False
        object.__setattr__(self, "weights", weights)

    @classmethod
    def identity(cls) -> "SmoothKernel":
        return cls(np.array([0.0, 0.0, 1.0, 0.0, 0.0]))

    @classmethod
    def uniform(cls) -> "SmoothKernel":
        return cls(np.full(len(OFFSETS), 1.0 / len(OFFSETS)))

    def to_list(self):
        return self.weights.tolist()


def _structure_order(structure):
    """Sorted row order and a group id per sorted row."""
    if isinstance(structure, FrameTable):
        keys = (structure.second_index, structure.subsequence_id, structure.participant_id)
    else:
        keys = tuple(np.asarray(k) for k in reversed(structure))
    order = np.lexsort(keys)
    group_keys = np.stack([k[order] for k in keys[1:]], axis=1) if len(keys) > 1 else np.zeros((order.size, 0))
    if order.size:
        change = np.any(np.diff(group_keys, axis=0) != 0, axis=1) if group_keys.shape[1] else np.zeros(order.size - 1, bool)
        groups = np.concatenate([[0], np.cumsum(change)])
    else:
        groups = np.zeros(0, dtype=np.int64)
    return order, groups


def smooth(P, structure, k: SmoothKernel) -> ScoreMatrix:
    """Weighted average of each second with its two neighbours on both sides inside the same subsequence.

    `structure` is the FrameTable the rows belong to, or a (participant_id, subsequence_id, second_index) tuple.
    Out-of-range offsets are dropped and the remaining weights renormalized.
    """
    values = values_of(P)
    order, groups = _structure_order(structure)
    if order.size != values.shape[0]:
        raise ValidationError(f"structure has {order.size} rows, prediction has {values.shape[0]}")
    n = values.shape[0]
    sorted_p = values[order]
    out = np.zeros_like(sorted_p)
    mass = np.zeros(n)
    idx = np.arange(n)
    for d, weight in zip(OFFSETS, k.weights):
        if weight == 0.0:
            continue
        src = idx + d
        ok = (src >= 0) & (src < n)
        ok[ok] = groups[src[ok]] == groups[idx[ok]]
        out[ok] += weight * sorted_p[src[ok]]
        mass[ok] += weight
    keep = mass > 0
    out[keep] /= mass[keep][:, None]
    out[~keep] = sorted_p[~keep]
    result = np.empty_like(out)
    result[order] = out
    return ScoreMatrix(result, kind="probability")


def optimize_smooth_weights(P_valid, Y_valid, w, structure, tol=1e-7, max_sweeps=100) -> SmoothKernel:
    """Cyclic line searches from the current kernel toward each simplex vertex, starting at the identity.

    A move is kept only when it lowers the weighted Brier score, so the result never scores worse than identity.
    """
    if max_sweeps < 1:
        raise ValidationError(f"max_sweeps must be >= 1, got {max_sweeps}")
    vertices = np.eye(len(OFFSETS))
    current = SmoothKernel.identity().weights.copy()

    def loss(weights):
        return brier_score(smooth(P_valid, structure, SmoothKernel(weights / weights.sum())), Y_valid, w)

    best = loss(current)
    start_score = best
    for sweep in range(max_sweeps):
        before = best
        for vertex in vertices:
            def along(a):
                return loss((1.0 - a) * current + a * vertex)

            res = minimize_scalar(along, bounds=(0.0, 1.0), method="bounded", options={"xatol": 1e-6})
            candidate = (1.0 - res.x) * current + res.x * vertex
            score = loss(candidate)
            if score < best:
                current, best = candidate, score
        if before - best < tol:
            break
    log(f"[Smooth] kernel {np.round(current / current.sum(), 4).tolist()} after {sweep + 1} sweeps: "
        f"Brier {start_score:.6f} -> {best:.6f}", message_type='info')
    return SmoothKernel(current / current.sum())
