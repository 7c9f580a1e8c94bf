import numpy as np
import pytest

from src.data import SoftLabelMatrix
from src.errors import NumericError, ValidationError
from src.objectives import (HESS_MIN, OBJECTIVES, brier_grad_hess, brier_loss, brier_score, error_rate, logloss,
                            logloss_grad_hess, softmax_rows)

STEP = 1e-5


def random_case(rng, n=50, c=20):
    raw = rng.normal(scale=2.0, size=(n, c))
    Y = rng.dirichlet(np.ones(c), size=n)
    w = rng.uniform(0.5, 2.0, size=c)
    return raw, Y, w


def column_step(raw, k, h):
    out = raw.copy()
    out[:, k] += h
    return out


def finite_difference(fn, raw):
    """Central differences of a row-separable function, one class column at a time."""
    out = np.empty_like(raw)
    for k in range(raw.shape[1]):
        out[:, k] = (fn(column_step(raw, k, STEP), k) - fn(column_step(raw, k, -STEP), k)) / (2 * STEP)
    return out


def test_brier_score_reference_values():
    assert brier_score(np.eye(3), np.eye(3), np.ones(3)) == 0.0
    assert brier_score(np.array([[1.0, 0.0]]), np.array([[0.0, 1.0]]), np.ones(2)) == pytest.approx(2.0)
    uniform = np.full((1, 4), 0.25)
    assert brier_score(uniform, np.array([[1.0, 0.0, 0.0, 0.0]]), np.ones(4)) == pytest.approx(0.75)


def test_brier_score_reductions():
    P = np.array([[1.0, 0.0], [0.5, 0.5]])
    Y = np.array([[0.0, 1.0], [1.0, 0.0]])
    rows = brier_score(P, Y, np.ones(2), reduction="none")
    np.testing.assert_allclose(rows, [2.0, 0.5])
    assert brier_score(P, Y, np.ones(2), reduction="sum") == pytest.approx(2.5)
    assert brier_score(P, Y, np.ones(2)) == pytest.approx(1.25)
    with pytest.raises(ValidationError):
        brier_score(P, Y, np.ones(2), reduction="median")


def test_brier_loss_is_brier_score_of_softmax(rng):
    for _ in range(1000):
        c = int(rng.integers(2, 6))
        raw, Y, w = random_case(rng, n=int(rng.integers(1, 8)), c=c)
        assert brier_loss(raw, Y, w) == brier_score(softmax_rows(raw), Y, w)


def test_softmax_is_stable_for_huge_scores():
    P = softmax_rows(np.array([[1000.0, 0.0], [-1000.0, -1000.0]])).values
    np.testing.assert_allclose(P, [[1.0, 0.0], [0.5, 0.5]])


def test_brier_gradient_and_hessian_match_finite_differences(rng):
    for _ in range(100):
        raw, Y, w = random_case(rng)
        gh = brier_grad_hess(raw, Y, w, reduction="sum", hess_min=-np.inf)
        fd_grad = finite_difference(lambda r, k: brier_loss(r, Y, w, reduction="none"), raw)
        fd_hess = finite_difference(
            lambda r, k: brier_grad_hess(r, Y, w, reduction="sum", hess_min=-np.inf).grad[:, k], raw)
        np.testing.assert_allclose(gh.grad, fd_grad, rtol=1e-5, atol=1e-8)
        np.testing.assert_allclose(gh.hess, fd_hess, rtol=1e-5, atol=1e-8)


def test_logloss_gradient_and_hessian_match_finite_differences(rng):
    for _ in range(100):
        raw, Y, _ = random_case(rng)
        gh = logloss_grad_hess(raw, Y, hess_min=-np.inf)
        fd_grad = finite_difference(lambda r, k: logloss(r, Y, reduction="none"), raw)
        fd_hess = finite_difference(lambda r, k: logloss_grad_hess(r, Y, hess_min=-np.inf).grad[:, k], raw)
        np.testing.assert_allclose(gh.grad, fd_grad, rtol=1e-5, atol=1e-8)
        np.testing.assert_allclose(gh.hess, fd_hess, rtol=1e-5, atol=1e-8)


def test_mean_reduction_scales_by_rows(rng):
    raw, Y, w = random_case(rng, n=10, c=3)
    total = brier_grad_hess(raw, Y, w, reduction="sum", hess_min=-np.inf)
    mean = brier_grad_hess(raw, Y, w, reduction="mean", hess_min=-np.inf)
    np.testing.assert_allclose(mean.grad, total.grad / 10)
    np.testing.assert_allclose(mean.hess, total.hess / 10)


def test_hessian_is_floored(rng):
    raw, Y, w = random_case(rng, n=200, c=5)
    raw_hess = brier_grad_hess(raw, Y, w, reduction="sum", hess_min=-np.inf).hess
    assert np.any(raw_hess < 0)
    floored = brier_grad_hess(raw, Y, w, reduction="sum").hess
    assert floored.min() >= HESS_MIN
    np.testing.assert_array_equal(floored, np.maximum(raw_hess, HESS_MIN))


def test_registry_uses_sum_reduction(rng):
    raw, Y, w = random_case(rng, n=5, c=3)
    gh = OBJECTIVES["softmax_brier"](raw, Y, w)
    np.testing.assert_array_equal(gh.grad, brier_grad_hess(raw, Y, w, reduction="sum").grad)
    assert set(OBJECTIVES) == {"softmax_brier", "softmax_logloss"}


def test_shape_mismatch_is_rejected():
    with pytest.raises(ValidationError):
        brier_grad_hess(np.zeros((2, 3)), np.eye(2), np.ones(3))
    with pytest.raises(ValidationError):
        brier_grad_hess(np.zeros((2, 3)), np.full((2, 3), 1 / 3), np.ones(2))


def test_non_finite_scores_are_rejected():
    with pytest.raises(ValidationError):
        brier_loss(np.array([[np.nan, 0.0]]), np.array([[1.0, 0.0]]), np.ones(2))


def test_infinite_weights_raise_numeric_error():
    with pytest.raises(NumericError):
        brier_grad_hess(np.zeros((1, 2)), np.array([[1.0, 0.0]]), np.array([np.inf, 1.0]))


def test_error_rate_uses_hardened_targets():
    P = np.array([[0.6, 0.4], [0.2, 0.8], [0.5, 0.5]])
    Y = SoftLabelMatrix(np.array([[0.9, 0.1], [0.6, 0.4], [0.5, 0.5]]))
    assert error_rate(P, Y) == pytest.approx(1 / 3)


def test_non_finite_raw_scores_name_the_cell():
    raw = np.zeros((4, 3))
    raw[2, 1] = np.nan
    Y = np.full((4, 3), 1 / 3)
    with pytest.raises(NumericError, match=r"n=2, c=1"):
        brier_grad_hess(raw, Y, np.ones(3))
    raw[2, 1] = np.inf
    with pytest.raises(NumericError, match=r"n=2, c=1"):
        logloss_grad_hess(raw, Y)


def test_scaling_the_weights_scales_everything(rng):
    raw, Y, w = random_case(rng, n=30, c=4)
    base = brier_grad_hess(raw, Y, w, reduction="sum", hess_min=-np.inf)
    for lam in (0.5, 3.0, 10.0):
        scaled = brier_grad_hess(raw, Y, lam * w, reduction="sum", hess_min=-np.inf)
        np.testing.assert_allclose(scaled.grad, lam * base.grad, rtol=1e-12, atol=1e-15)
        np.testing.assert_allclose(scaled.hess, lam * base.hess, rtol=1e-12, atol=1e-15)
        assert brier_loss(raw, Y, lam * w) == pytest.approx(lam * brier_loss(raw, Y, w), rel=1e-12)


@pytest.mark.parametrize("objective", ["softmax_brier", "softmax_logloss"])
def test_gradient_vanishes_when_scores_reproduce_the_targets(rng, objective):
    raw, _, w = random_case(rng, n=40, c=5)
    Y = softmax_rows(raw).values
    gh = OBJECTIVES[objective](raw, Y, w)
    np.testing.assert_allclose(gh.grad, 0.0, atol=1e-12)
