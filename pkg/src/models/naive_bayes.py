from dataclasses import dataclass

import numpy as np
from scipy.special import logsumexp

from ..data.frame import ScoreMatrix
from ..errors import ValidationError
from ..utils import log
from .tree import _check_matrix

VAR_FLOOR = 1e-9


@dataclass(eq=False)
class GaussianNB:
    priors: np.ndarray
    means: np.ndarray
    variances: np.ndarray

    @property
    def n_classes(self) -> int:
        return self.priors.size

    @property
    def n_features(self) -> int:
        return self.means.shape[1]


def fit_gaussian_nb(X, hard_labels, n_classes: int, var_floor=VAR_FLOOR) -> GaussianNB:
    X = _check_matrix(X)
    y = np.asarray(hard_labels, dtype=np.int64)
    if y.shape != (X.shape[0],):
        raise ValidationError(f"{y.size} labels for {X.shape[0]} rows")
    if y.size and (y.min() < 0 or y.max() >= n_classes):
        raise ValidationError(f"labels must lie in [0, {n_classes})")
    if np.isnan(X).any():
        raise ValidationError("naive Bayes needs complete features; impute missing cells first")
    counts = np.bincount(y, minlength=n_classes).astype(np.float64)
    absent = np.flatnonzero(counts == 0)
    if absent.size:
        log(f"[NB] classes {absent.tolist()} are absent from training and will never be predicted", message_type='warning')
    means = np.zeros((n_classes, X.shape[1]))
    variances = np.ones((n_classes, X.shape[1]))
    for c in np.flatnonzero(counts):
        Xc = X[y == c]
        means[c] = Xc.mean(axis=0)
        variances[c] = np.maximum(Xc.var(axis=0), var_floor)
    return GaussianNB(priors=counts / max(y.size, 1), means=means, variances=variances)


def nb_predict(m: GaussianNB, X) -> ScoreMatrix:
    X = _check_matrix(X, m.n_features)
    if np.isnan(X).any():
        raise ValidationError("naive Bayes needs complete features; impute missing cells first")
    with np.errstate(divide="ignore"):
        log_prior = np.log(m.priors)
    diff = X[:, None, :] - m.means[None, :, :]
    log_lik = -0.5 * np.sum(np.log(2.0 * np.pi * m.variances)[None] + diff * diff / m.variances[None], axis=2)
    joint = log_lik + log_prior[None, :]
    log_post = joint - logsumexp(joint, axis=1, keepdims=True)
    return ScoreMatrix(np.exp(log_post), kind="probability")


@dataclass(eq=False)
class MeanImputer:
    means: np.ndarray

    @classmethod
    def fit(cls, X) -> "MeanImputer":
        X = _check_matrix(X)
        present = ~np.isnan(X)
        sums = np.where(present, X, 0.0).sum(axis=0)
        counts = present.sum(axis=0)
        return cls(np.where(counts > 0, sums / np.maximum(counts, 1), 0.0))

    def transform(self, X) -> np.ndarray:
        X = _check_matrix(X, self.means.size)
        return np.where(np.isnan(X), self.means[None, :], X)
