import numpy as np
import pytest

from src.errors import ValidationError
from src.models import (TreeConfig, audit_tree, build_probability_tree, build_regression_tree, feature_importance,
                        format_importance_table, tree_predict, tree_predict_batch)


def test_regression_tree_finds_step():
    X = np.array([[0.0], [1.0], [2.0], [3.0]])
    g = np.array([-1.0, -1.0, 1.0, 1.0])
    t = build_regression_tree(X, g, np.ones(4), TreeConfig(max_depth=1))
    assert t.n_nodes == 3
    assert t.feature[0] == 0
    assert t.threshold[0] == pytest.approx(1.5)
    assert t.gain[0] == pytest.approx(4 / 3)
    np.testing.assert_allclose(t.predict(X), [2 / 3, 2 / 3, -2 / 3, -2 / 3])
    assert tree_predict(t, [0.5]) == pytest.approx(2 / 3)


def test_missing_values_get_their_own_side():
    X = np.array([[0.0], [1.0], [np.nan], [np.nan]])
    g = np.array([-1.0, -1.0, 1.0, 1.0])
    t = build_regression_tree(X, g, np.ones(4), TreeConfig(max_depth=1))
    np.testing.assert_allclose(t.predict(X), [2 / 3, 2 / 3, -2 / 3, -2 / 3])
    assert t.default_left[0]


def test_no_split_when_min_child_weight_blocks_it():
    X = np.array([[0.0], [1.0]])
    t = build_regression_tree(X, np.array([-1.0, 1.0]), np.ones(2), TreeConfig(min_child_weight=2.0))
    assert t.n_nodes == 1
    assert t.predict(X)[0] == pytest.approx(0.0)


def test_gamma_prunes_weak_splits():
    X = np.array([[0.0], [1.0], [2.0], [3.0]])
    g = np.array([-1.0, -1.0, 1.0, 1.0])
    assert build_regression_tree(X, g, np.ones(4), TreeConfig(gamma=2.0)).n_nodes == 1


def test_ties_go_to_lowest_feature_index():
    X = np.array([[0.0, 0.0], [1.0, 1.0], [2.0, 2.0], [3.0, 3.0]])
    g = np.array([-1.0, -1.0, 1.0, 1.0])
    t = build_regression_tree(X, g, np.ones(4), TreeConfig(max_depth=1))
    assert t.feature[0] == 0


def test_depth_limit_and_audit(rng):
    X = rng.normal(size=(200, 4))
    g = rng.normal(size=200)
    h = rng.uniform(0.5, 1.5, size=200)
    cfg = TreeConfig(max_depth=3, gamma=0.1)
    t = build_regression_tree(X, g, h, cfg)
    assert t.depth <= 3
    assert audit_tree(t, cfg) == []


def test_batch_prediction_matches_single_rows(rng):
    X = rng.normal(size=(50, 3))
    X[::7, 1] = np.nan
    t = build_regression_tree(X, rng.normal(size=50), np.ones(50), TreeConfig(max_depth=4))
    batch = tree_predict_batch(t, X)
    singles = np.array([tree_predict(t, row) for row in X])
    np.testing.assert_array_equal(batch, singles)


def test_regression_tree_rejects_bad_inputs():
    with pytest.raises(ValidationError):
        build_regression_tree(np.zeros((0, 1)), np.zeros(0), np.zeros(0), TreeConfig())
    with pytest.raises(ValidationError):
        build_regression_tree(np.zeros((2, 1)), np.zeros(2), -np.ones(2), TreeConfig())
    with pytest.raises(ValidationError):
        build_regression_tree(np.zeros((2, 1)), np.zeros(2), np.ones(2), TreeConfig(max_depth=0))


def test_prediction_checks_feature_count():
    t = build_regression_tree(np.zeros((2, 2)), np.zeros(2), np.ones(2), TreeConfig())
    with pytest.raises(ValidationError):
        tree_predict(t, [0.0])


def test_probability_tree_leaves_are_mean_soft_labels():
    X = np.array([[0.0], [1.0], [10.0], [11.0]])
    Y = np.array([[1.0, 0.0], [0.6, 0.4], [0.0, 1.0], [0.2, 0.8]])
    t = build_probability_tree(X, Y, np.ones(2), TreeConfig(max_depth=1, reg_lambda=0.0))
    assert t.threshold[0] == pytest.approx(5.5)
    np.testing.assert_allclose(t.predict(X), [[0.8, 0.2], [0.8, 0.2], [0.1, 0.9], [0.1, 0.9]])
    np.testing.assert_allclose(t.predict(X).sum(axis=1), 1.0)


def test_probability_tree_bootstrap_sample():
    X = np.array([[0.0], [1.0], [2.0]])
    Y = np.eye(3)
    t = build_probability_tree(X, Y, np.ones(3), TreeConfig(max_depth=2), bootstrap_indices=[0, 0, 2])
    np.testing.assert_allclose(t.predict(np.array([[0.0]])), [[1.0, 0.0, 0.0]])
    np.testing.assert_allclose(t.predict(np.array([[2.0]])), [[0.0, 0.0, 1.0]])


def test_randomized_thresholds_are_seeded(rng):
    X = rng.normal(size=(80, 3))
    Y = np.eye(2)[(X[:, 0] > 0).astype(int)]
    cfg = TreeConfig(max_depth=3, randomized_thresholds=True, seed=11)
    a = build_probability_tree(X, Y, np.ones(2), cfg)
    b = build_probability_tree(X, Y, np.ones(2), cfg)
    np.testing.assert_array_equal(a.threshold, b.threshold)
    np.testing.assert_array_equal(a.predict(X), b.predict(X))


def test_feature_importance_is_normalized_and_sorted(rng):
    X = rng.normal(size=(100, 3))
    g = np.where(X[:, 2] > 0, 1.0, -1.0)
    t = build_regression_tree(X, g, np.ones(100), TreeConfig(max_depth=2))
    ranked = feature_importance([t], ["a", "b", "c"])
    assert ranked[0][0] == "c"
    assert sum(share for _, share in ranked) == pytest.approx(1.0)
    table = format_importance_table(ranked)
    assert table.splitlines()[0] == "Importance metric: total gain"
    assert "| c" in table
