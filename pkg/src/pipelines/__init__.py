from .preprocess import (RawStream, SplitPlan, STATS, DEFAULT_SAMPLE_RATES, aggregate_second, frame_from_streams,
                         correct_handedness, sample_windows, split_into_subsequences, resplit_bagging, add_lag_lead,
                         add_differences)
from .stacking import (FoldPlan, OofPrediction, StackedModel, participant_folds, out_of_fold, stack_transfer, fit_stack,
                       stack_predict, average_predictions, room_probability_columns)
from .smoothing import SmoothKernel, smooth, optimize_smooth_weights
