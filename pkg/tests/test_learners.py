import numpy as np
import pytest

from src.data import ClassWeights, SoftLabelMatrix
from src.errors import ValidationError
from src.models import (Forest, ForestConfig, LearnerSpec, MeanImputer, TreeConfig, build_probability_tree,
                        fit_forest, fit_gaussian_nb, fit_learner, forest_predict, nb_predict, predict_learner, spec_seed)
from src.objectives import brier_score
from src.utils import no_progress


def test_single_tree_forest_is_a_probability_tree(blobs):
    X, Y, w, _ = blobs
    tree = TreeConfig(max_depth=4, reg_lambda=0.0, seed=2)
    forest = fit_forest(X, Y, w, ForestConfig(n_trees=1, bootstrap=False, tree=tree), progress_bar_cmd=no_progress)
    single = build_probability_tree(X, Y, w, tree)
    np.testing.assert_array_equal(forest_predict(forest, X).values, single.predict(X))


def test_forest_averages_its_trees(blobs):
    X, Y, w, _ = blobs
    forest = fit_forest(X, Y, w, ForestConfig(n_trees=2, tree=TreeConfig(max_depth=2)), progress_bar_cmd=no_progress)
    expected = (forest.trees[0].predict(X) + forest.trees[1].predict(X)) / 2
    np.testing.assert_allclose(forest_predict(forest, X).values, expected)


def test_forest_fits_blobs_and_is_thread_independent(blobs):
    X, Y, w, _ = blobs
    cfg = ForestConfig(n_trees=20, tree=TreeConfig(max_depth=6, reg_lambda=0.0, seed=1))
    one = fit_forest(X, Y, w, cfg, n_threads=1, progress_bar_cmd=no_progress)
    four = fit_forest(X, Y, w, cfg, n_threads=4, progress_bar_cmd=no_progress)
    P = forest_predict(one, X)
    np.testing.assert_array_equal(P.values, forest_predict(four, X).values)
    np.testing.assert_allclose(P.values.sum(axis=1), 1.0)
    assert brier_score(P, Y, w) < 0.1


def test_extra_trees_config():
    cfg = ForestConfig.extra_trees(n_trees=5)
    assert not cfg.bootstrap
    assert cfg.tree.randomized_thresholds
    with pytest.raises(ValidationError):
        ForestConfig(n_trees=0).validate()


def test_naive_bayes_separates_shifted_gaussians(rng):
    labels = np.repeat([0, 1], 500)
    X = rng.normal(size=(1000, 2)) + np.where(labels == 0, -5.0, 5.0)[:, None]
    m = fit_gaussian_nb(X, labels, 2)
    P = nb_predict(m, X).values
    assert np.mean(np.argmax(P, axis=1) == labels) > 0.99
    np.testing.assert_allclose(P.sum(axis=1), 1.0)


def test_naive_bayes_returns_priors_when_features_carry_no_signal():
    X = np.tile([[1.0, 2.0], [3.0, 4.0]], (3, 1))
    labels = np.array([0, 0, 1, 1, 0, 0])
    m = fit_gaussian_nb(X, labels, 2)
    P = nb_predict(m, np.array([[2.0, 3.0]])).values
    np.testing.assert_allclose(P, [[4 / 6, 2 / 6]])


def test_naive_bayes_handles_constant_features_and_absent_classes(caplog):
    X = np.array([[1.0, 0.0], [1.0, 1.0], [1.0, 5.0]])
    with caplog.at_level("WARNING", logger="softbrier"):
        m = fit_gaussian_nb(X, np.array([0, 0, 1]), 3)
    assert m.priors[2] == 0.0
    assert "absent" in caplog.text
    P = nb_predict(m, X).values
    assert np.all(np.isfinite(P))
    np.testing.assert_array_equal(P[:, 2], 0.0)


def test_naive_bayes_rejects_missing_cells():
    with pytest.raises(ValidationError):
        fit_gaussian_nb(np.array([[np.nan]]), np.array([0]), 1)


def test_mean_imputer_fills_column_means():
    X = np.array([[1.0, np.nan], [3.0, np.nan], [np.nan, np.nan]])
    imputer = MeanImputer.fit(X)
    np.testing.assert_array_equal(imputer.transform(X), [[1.0, 0.0], [3.0, 0.0], [2.0, 0.0]])


def test_spec_seed_depends_on_name_not_position():
    assert spec_seed("forest", 42) == spec_seed("forest", 42)
    assert spec_seed("forest", 42) != spec_seed("forest_no_lags", 42)
    assert 0 <= spec_seed("x", 2 ** 40) < 2 ** 31


def test_learner_spec_validation():
    with pytest.raises(ValidationError):
        LearnerSpec("a", "svm").validate()
    with pytest.raises(ValidationError):
        LearnerSpec("a", "forest", {"learning_rate": 0.1}).validate()
    with pytest.raises(ValidationError):
        LearnerSpec.from_dict({"name": "a", "kind": "forest", "extra": 1})
    spec = LearnerSpec.from_dict({"name": "g", "kind": "gbdt_logloss", "params": {"max_depth": 2}})
    assert spec.boost_config(seed=9).objective == "softmax_logloss"
    assert spec.boost_config(seed=9).tree.max_depth == 2


@pytest.mark.parametrize("kind", ["gbdt_brier", "gbdt_logloss", "forest", "extra_trees", "naive_bayes"])
def test_every_learner_kind_fits_and_predicts(blobs, kind):
    X, Y, w, _ = blobs
    params = {"n_rounds_max": 20, "max_depth": 3} if kind.startswith("gbdt") else {}
    if kind in ("forest", "extra_trees"):
        params = {"n_trees": 10, "max_depth": 4}
    spec = LearnerSpec("m", kind, params)
    fl = fit_learner(spec, X, Y, w, ["x", "y"], seed=1, progress_bar_cmd=no_progress)
    P = predict_learner(fl, X)
    assert P.shape == (300, 3)
    np.testing.assert_allclose(P.values.sum(axis=1), 1.0)
    assert brier_score(P, Y, w) < 0.3


def test_drop_lag_lead_selects_columns(blobs):
    X, Y, w, _ = blobs
    X3 = np.hstack([X, X[:, :1] * 2])
    spec = LearnerSpec("nb", "naive_bayes", drop_lag_lead=True)
    fl = fit_learner(spec, X3, Y, w, ["x", "y", "lag1_x"], progress_bar_cmd=no_progress)
    np.testing.assert_array_equal(fl.feature_index, [0, 1])
    np.testing.assert_array_equal(predict_learner(fl, X3).values, predict_learner(fl, np.hstack([X, -X[:, :1]])).values)


def test_fit_learner_checks_column_names(blobs):
    X, Y, w, _ = blobs
    with pytest.raises(ValidationError):
        fit_learner(LearnerSpec("nb", "naive_bayes"), X, Y, w, ["x"], progress_bar_cmd=no_progress)


def test_soft_labels_drive_forest_leaves():
    X = np.zeros((4, 1))
    Y = SoftLabelMatrix(np.array([[0.6, 0.4], [0.6, 0.4], [0.2, 0.8], [0.2, 0.8]]))
    f = fit_forest(X, Y, ClassWeights.uniform(2), ForestConfig(n_trees=1, bootstrap=False),
                   progress_bar_cmd=no_progress)
    np.testing.assert_allclose(forest_predict(f, X).values, [[0.4, 0.6]] * 4)


def test_forest_prediction_ignores_tree_order(blobs):
    X, Y, w, _ = blobs
    forest = fit_forest(X, Y, w, ForestConfig(n_trees=7, tree=TreeConfig(max_depth=3)), progress_bar_cmd=no_progress)
    reversed_forest = Forest(trees=forest.trees[::-1], config=forest.config, n_classes=3, n_features=2)
    np.testing.assert_allclose(forest_predict(reversed_forest, X).values, forest_predict(forest, X).values,
                               rtol=1e-12, atol=1e-15)


def test_smaller_forest_is_a_prefix_of_a_larger_one(blobs):
    X, Y, w, _ = blobs
    tree = TreeConfig(max_depth=3, colsample=0.5, seed=9)
    small = fit_forest(X, Y, w, ForestConfig(n_trees=3, tree=tree), progress_bar_cmd=no_progress)
    big = fit_forest(X, Y, w, ForestConfig(n_trees=5, tree=tree), progress_bar_cmd=no_progress)
    prefix = Forest(trees=big.trees[:3], config=small.config, n_classes=3, n_features=2)
    np.testing.assert_array_equal(forest_predict(prefix, X).values, forest_predict(small, X).values)


def test_naive_bayes_is_unchanged_by_affine_feature_rescaling(rng):
    labels = np.repeat([0, 1, 2], 200)
    X = rng.normal(size=(600, 3)) + np.array([[-2.0, 0.0, 1.0], [2.0, 1.0, 0.0], [0.0, -1.0, 2.0]])[labels]
    scale = np.array([0.5, 3.0, 1.7])
    shift = np.array([10.0, -4.0, 0.25])
    original = nb_predict(fit_gaussian_nb(X, labels, 3), X).values
    rescaled = nb_predict(fit_gaussian_nb(X * scale + shift, labels, 3), X * scale + shift).values
    np.testing.assert_allclose(rescaled, original, rtol=1e-7, atol=1e-10)
