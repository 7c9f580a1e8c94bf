from .run_config import (RunConfig, SplitSection, FeatureSection, TransferSection, TrainSection, StackSection,
                         SmoothSection, EvalSection, PathSection, default_learners, load_run_config)
