from .brier import (GradHess, HESS_MIN, OBJECTIVES, softmax_rows, brier_score, brier_loss, brier_grad_hess, logloss,
                    logloss_grad_hess, error_rate, check_targets)
from .resolution import Resolution, quantize, copy_counts, duplicate_for_resolution, approx_exact_gap, gap_bound
