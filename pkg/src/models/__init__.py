from .tree import (Tree, TreeConfig, build_regression_tree, build_probability_tree, tree_predict, tree_predict_batch,
                   audit_tree, feature_importance, format_importance_table)
from .gbdt import (BoostConfig, BoostedEnsemble, GridResult, fit_gbdt, gbdt_raw_scores, gbdt_predict, expand_grid,
                   grid_search, grid_table_frame, select_grid_result)
from .forest import Forest, ForestConfig, fit_forest, forest_predict
from .naive_bayes import GaussianNB, MeanImputer, fit_gaussian_nb, nb_predict
from .learners import LEARNER_KINDS, LearnerSpec, FittedLearner, fit_learner, predict_learner, spec_seed
from .model_manager import FORMAT_NAME, FORMAT_VERSION, load_model, read_header, save_model
