from dataclasses import dataclass

import numpy as np
from scipy.special import softmax

from ..data.frame import ClassWeights, ScoreMatrix, SoftLabelMatrix, values_of
from ..errors import NumericError, ValidationError

HESS_MIN = 1e-16
_REDUCTIONS = ("mean", "sum", "none")


@dataclass(frozen=True, eq=False)
class GradHess:
    grad: np.ndarray
    hess: np.ndarray


def _check_shapes(raw, Y, w=None):
    if raw.ndim != 2 or raw.shape != Y.shape:
        raise ValidationError(f"score matrix shape {raw.shape} does not match label shape {Y.shape}")
    if w is not None and w.shape != (raw.shape[1],):
        raise ValidationError(f"expected {raw.shape[1]} class weights, got {w.shape[0]}")


def _reduce(rows: np.ndarray, reduction: str):
    if reduction == "none":
        return rows
    total = np.sum(rows)
    if reduction == "sum":
        return float(total)
    if reduction == "mean":
        return float(total / rows.size) if rows.size else 0.0
    raise ValidationError(f"reduction must be one of {_REDUCTIONS}, got {reduction!r}")


def _finite_or_raise(name, values):
    bad = np.argwhere(~np.isfinite(values))
    if bad.size:
        n, c = (int(v) for v in bad[0])
        raise NumericError(f"{name} is not finite at (n={n}, c={c})")


def softmax_rows(raw) -> ScoreMatrix:
    if isinstance(raw, ScoreMatrix) and raw.kind != "raw":
        raise ValidationError("softmax_rows expects a raw score matrix")
    values = values_of(raw)
    if values.ndim != 2:
        raise ValidationError(f"score matrix must be 2-D, got shape {values.shape}")
    if not np.all(np.isfinite(values)):
        raise ValidationError("softmax_rows received non-finite scores")
    # scipy subtracts the row maximum before exponentiating
    return ScoreMatrix(softmax(values, axis=1), kind="probability")


def brier_score(P, Y, w, reduction="mean"):
    """Weighted Brier score (1/N) sum_n sum_c w_c (P[n,c] - Y[n,c])^2."""
    P, Y, w = values_of(P), values_of(Y), values_of(w)
    _check_shapes(P, Y, w)
    rows = np.sum(w * (P - Y) ** 2, axis=1)
    return _reduce(rows, reduction)


def brier_loss(raw, Y, w, reduction="mean"):
    return brier_score(softmax_rows(raw), Y, w, reduction=reduction)


def brier_grad_hess(raw, Y, w, reduction="mean", hess_min=HESS_MIN) -> GradHess:
    """Gradient and diagonal Hessian of the softmax Brier loss w.r.t. the raw scores.

    With r_c = w_c (s_c - y_c), S = sum_c r_c s_c and Q = sum_c w_c s_c^2, the per-row partials are
        d/dp_k   = 2 s_k (r_k - S)
        d2/dp_k2 = 2 s_k [(1 - 2 s_k)(r_k - S + w_k s_k) + s_k Q]
    Only row n contributes to the derivatives at (n, k).
    """
    raw_v, Y, w = values_of(raw), values_of(Y), values_of(w)
    _check_shapes(raw_v, Y, w)
    _finite_or_raise("raw score", raw_v)
    s = softmax_rows(raw_v).values
    r = w * (s - Y)
    S = np.sum(r * s, axis=1, keepdims=True)
    Q = np.sum(w * s * s, axis=1, keepdims=True)
    grad = 2.0 * s * (r - S)
    hess = 2.0 * s * ((1.0 - 2.0 * s) * (r - S + w * s) + s * Q)
    if reduction == "mean":
        scale = 1.0 / raw_v.shape[0]
        grad = grad * scale
        hess = hess * scale
    elif reduction != "sum":
        raise ValidationError(f"gradient reduction must be 'mean' or 'sum', got {reduction!r}")
    _finite_or_raise("brier gradient", grad)
    _finite_or_raise("brier hessian", hess)
    return GradHess(grad=grad, hess=np.maximum(hess, hess_min))


def logloss(raw, Y, reduction="sum"):
    """Soft-target cross entropy sum_n sum_c -Y[n,c] ln softmax(raw)[n,c]."""
    raw_v, Y = values_of(raw), values_of(Y)
    _check_shapes(raw_v, Y)
    shifted = raw_v - raw_v.max(axis=1, keepdims=True)
    log_s = shifted - np.log(np.sum(np.exp(shifted), axis=1, keepdims=True))
    rows = -np.sum(np.where(Y > 0, Y * log_s, 0.0), axis=1)
    return _reduce(rows, reduction)


def logloss_grad_hess(raw, Y, hess_min=HESS_MIN) -> GradHess:
    raw_v, Y = values_of(raw), values_of(Y)
    _check_shapes(raw_v, Y)
    _finite_or_raise("raw score", raw_v)
    s = softmax_rows(raw_v).values
    mass = Y.sum(axis=1, keepdims=True)
    grad = s * mass - Y
    hess = s * (1.0 - s) * mass
    _finite_or_raise("logloss gradient", grad)
    return GradHess(grad=grad, hess=np.maximum(hess, hess_min))


OBJECTIVES = {
    "softmax_brier": lambda raw, Y, w, hess_min=HESS_MIN: brier_grad_hess(raw, Y, w, reduction="sum", hess_min=hess_min),
    "softmax_logloss": lambda raw, Y, w, hess_min=HESS_MIN: logloss_grad_hess(raw, Y, hess_min=hess_min),
}


def error_rate(P, Y) -> float:
    """Share of rows whose most probable class differs from the hardened target."""
    P, Y = values_of(P), values_of(Y)
    _check_shapes(P, Y)
    if P.shape[0] == 0:
        return 0.0
    return float(np.mean(np.argmax(P, axis=1) != np.argmax(Y, axis=1)))


def check_targets(Y, w):
    """Coerces labels and weights to their validated wrappers."""
    if not isinstance(Y, SoftLabelMatrix):
        Y = SoftLabelMatrix(Y)
    if not isinstance(w, ClassWeights):
        w = ClassWeights(w)
    if len(w) != Y.shape[1]:
        raise ValidationError(f"{len(w)} class weights for {Y.shape[1]} classes")
    return Y, w
