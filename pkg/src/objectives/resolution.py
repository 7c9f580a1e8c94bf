from dataclasses import dataclass

import numpy as np

from ..data.frame import FrameTable, values_of
from ..errors import ValidationError
from ..utils import log

# absorbs representation error such as 0.29 * 100 = 28.999999999999996
QUANT_EPS = 1e-9


@dataclass(frozen=True)
class Resolution:
    k: int

    def __post_init__(self):
        if isinstance(self.k, bool) or int(self.k) != self.k or self.k < 1:
            raise ValidationError(f"resolution K must be an integer >= 1, got {self.k!r}")


def _as_resolution(k) -> Resolution:
    return k if isinstance(k, Resolution) else Resolution(k)


def quantize(values: np.ndarray, k: int) -> np.ndarray:
    """floor(k * x) / k, tolerant to floating representation error."""
    return np.floor(k * values + QUANT_EPS) / k


def copy_counts(Y, k, mode="floor") -> np.ndarray:
    """Number of hard-label copies of each source row per class."""
    k = _as_resolution(k).k
    Y = values_of(Y)
    base = np.floor(k * Y + QUANT_EPS).astype(np.int64)
    if mode == "floor":
        return base
    if mode != "largest_remainder":
        raise ValidationError(f"duplication mode must be 'floor' or 'largest_remainder', got {mode!r}")
    counts = base.copy()
    frac = k * Y - base
    short = k - base.sum(axis=1)
    for n in np.flatnonzero(short > 0):
        # stable sort on -frac keeps lower class indices first among ties
        order = np.argsort(-frac[n], kind="stable")
        counts[n, order[:short[n]]] += 1
    return counts


def duplicate_for_resolution(X: FrameTable, Y, k, mode="floor"):
    """Expands soft targets into K-resolution hard-label copies.

    The returned table repeats source keys (one copy per hard label), so it is a
    training matrix rather than a key-unique frame table.
    """
    counts = copy_counts(Y, k, mode)
    if counts.shape[0] != len(X):
        raise ValidationError(f"{counts.shape[0]} label rows for a table of {len(X)} rows")
    per_row = counts.sum(axis=1)
    dropped = int(np.sum(per_row == 0))
    if dropped:
        log(f"[Resolution] {dropped} rows produced no copies at K={_as_resolution(k).k} and were dropped", message_type='warning')
    flat = counts.ravel()
    source = np.repeat(np.arange(counts.shape[0]), counts.shape[1])
    labels = np.tile(np.arange(counts.shape[1]), counts.shape[0])
    source = np.repeat(source, flat)
    labels = np.repeat(labels, flat)
    out = X.take(source).replace(soft_labels=None)
    return out, labels.astype(np.int64)


def approx_exact_gap(P, Y, w, k):
    """(L_approx, L_exact): Brier score with P quantized to 1/K steps, and the exact one."""
    k = _as_resolution(k).k
    P, Y, w = values_of(P), values_of(Y), values_of(w)
    if P.shape != Y.shape or w.shape != (P.shape[1],):
        raise ValidationError(f"shape mismatch: P {P.shape}, Y {Y.shape}, w {w.shape}")
    n = P.shape[0]
    q = quantize(P, k)
    approx = np.sum(np.sum(w * (Y * Y - 2.0 * Y * q + q * q), axis=1)) / n
    exact = np.sum(np.sum(w * (Y * Y - 2.0 * Y * P + P * P), axis=1)) / n
    return float(approx), float(exact)


def gap_bound(P, Y, w, k) -> float:
    """Upper bound on |L_approx - L_exact| from |x - floor(Kx)/K| <= 1/K."""
    k = _as_resolution(k).k
    P, Y, w = values_of(P), values_of(Y), values_of(w)
    terms = w * (2.0 * Y / k + 2.0 * P / k + 1.0 / k ** 2)
    return float(np.sum(terms) / P.shape[0])
