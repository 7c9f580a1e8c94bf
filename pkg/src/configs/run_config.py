import json
from dataclasses import asdict, dataclass, field, fields
from typing import Dict, List, Optional

import numpy as np

from ..data.frame import ClassWeights
from ..errors import ValidationError
from ..models.gbdt import BoostConfig, expand_grid
from ..models.learners import LearnerSpec
from ..pipelines.preprocess import SplitPlan
from ..pipelines.smoothing import SmoothKernel
from ..synth.scenario import ScenarioConfig


def default_learners() -> List[Dict]:
    boost = {"n_rounds_max": 60, "learning_rate": 0.2, "max_depth": 4}
    trees = {"n_trees": 30, "max_depth": 8}
    return [
        {"name": "gbdt_brier", "kind": "gbdt_brier", "params": dict(boost)},
        {"name": "gbdt_logloss", "kind": "gbdt_logloss", "params": dict(boost)},
        {"name": "forest", "kind": "forest", "params": dict(trees)},
        {"name": "extra_trees", "kind": "extra_trees", "params": dict(trees)},
        {"name": "naive_bayes", "kind": "naive_bayes"},
        {"name": "forest_no_lags", "kind": "forest", "params": dict(trees), "drop_lag_lead": True},
    ]


@dataclass
class SplitSection:
    enabled: bool = True
    duration_range: List[int] = field(default_factory=lambda: [10, 30])
    gap_range: List[int] = field(default_factory=lambda: [10, 30])
    permute: bool = True

    def plan(self, seed: int) -> SplitPlan:
        return SplitPlan(tuple(self.duration_range), tuple(self.gap_range), seed=seed, permute=self.permute).validate()


@dataclass
class FeatureSection:
    handedness: bool = True
    lag_lead_columns: List[str] = field(default_factory=lambda: ["acc_x_mean", "acc_y_mean", "acc_z_mean"])
    lag_lead_orders: int = 10
    difference_columns: List[str] = field(default_factory=lambda: ["acc_x_mean", "acc_y_mean", "acc_z_mean"])
    difference_order: int = 1

    def validate(self):
        if self.lag_lead_orders < 0:
            raise ValidationError(f"features.lag_lead_orders must be >= 0, got {self.lag_lead_orders}")
        if self.difference_order not in (0, 1, 2):
            raise ValidationError(f"features.difference_order must be 0, 1 or 2, got {self.difference_order}")
        return self


@dataclass
class TransferSection:
    enabled: bool = True
    learner: Dict = field(default_factory=lambda: {"name": "room_forest", "kind": "forest",
                                                   "params": {"n_trees": 30, "max_depth": 8}})
    n_rooms: Optional[int] = None

    def spec(self) -> LearnerSpec:
        return LearnerSpec.from_dict(self.learner)


@dataclass
class TrainSection:
    holdout: List[int] = field(default_factory=lambda: [6, 10])
    base: Dict = field(default_factory=lambda: {"n_rounds_max": 100, "early_stopping_rounds": 10})
    grid: Dict[str, List] = field(default_factory=lambda: {"max_depth": [3, 4], "learning_rate": [0.1, 0.3]})
    learners: List[Dict] = field(default_factory=default_learners)

    def base_config(self) -> BoostConfig:
        return BoostConfig.from_dict(self.base).validate()

    def specs(self) -> List[LearnerSpec]:
        return [LearnerSpec.from_dict(spec) for spec in self.learners]


@dataclass
class StackSection:
    base: Dict = field(default_factory=lambda: {"n_rounds_max": 100, "early_stopping_rounds": 10})
    grid: Dict[str, List] = field(default_factory=lambda: {"max_depth": [2, 3], "learning_rate": [0.1]})
    use_base_features: bool = False

    def base_config(self) -> BoostConfig:
        return BoostConfig.from_dict(self.base).validate()


@dataclass
class SmoothSection:
    enabled: bool = True
    kernel: Optional[List[float]] = None
    max_sweeps: int = 100
    tol: float = 1e-7


@dataclass
class EvalSection:
    class_weights: Optional[List[float]] = None


@dataclass
class PathSection:
    out_dir: str = "runs/default"


_SECTIONS = {
    "gen": ScenarioConfig,
    "split": SplitSection,
    "features": FeatureSection,
    "transfer": TransferSection,
    "train": TrainSection,
    "stack": StackSection,
    "smooth": SmoothSection,
    "eval": EvalSection,
    "paths": PathSection,
}


def _check_type(value, default, key):
    if default is None:
        return
    if isinstance(default, bool):
        ok = isinstance(value, bool)
    elif isinstance(default, int):
        ok = isinstance(value, int) and not isinstance(value, bool)
    elif isinstance(default, float):
        ok = isinstance(value, (int, float)) and not isinstance(value, bool)
    else:
        ok = isinstance(value, type(default))
    if not ok:
        raise ValidationError(f"config key {key!r} must be of type {type(default).__name__}, got {value!r}")


def _section(cls, data, name):
    if not isinstance(data, dict):
        raise ValidationError(f"config section {name!r} must be an object")
    known = {f.name for f in fields(cls)}
    if cls is ScenarioConfig:
        known.discard("seed")
    unknown = set(data) - known
    if unknown:
        raise ValidationError(f"unknown keys in config section {name!r}: {sorted(unknown)}")
    defaults = cls()
    for key, value in data.items():
        _check_type(value, getattr(defaults, key), f"{name}.{key}")
    return cls(**data)


@dataclass
class RunConfig:
    """Every stage's parameters; `seed` drives all stochastic stages."""
    seed: int = 42
    gen: ScenarioConfig = field(default_factory=ScenarioConfig)
    split: SplitSection = field(default_factory=SplitSection)
    features: FeatureSection = field(default_factory=FeatureSection)
    transfer: TransferSection = field(default_factory=TransferSection)
    train: TrainSection = field(default_factory=TrainSection)
    stack: StackSection = field(default_factory=StackSection)
    smooth: SmoothSection = field(default_factory=SmoothSection)
    eval: EvalSection = field(default_factory=EvalSection)
    paths: PathSection = field(default_factory=PathSection)

    def __post_init__(self):
        self.gen.seed = self.seed

    def with_seed(self, seed: int) -> "RunConfig":
        data = self.to_dict()
        data["seed"] = int(seed)
        return RunConfig.from_dict(data)

    def validate(self):
        _check_type(self.seed, 0, "seed")
        if self.seed < 0:
            raise ValidationError(f"seed must be a non-negative integer, got {self.seed}")
        self.gen.validate()
        self.split.plan(self.seed)
        self.features.validate()
        if self.transfer.n_rooms is not None:
            _check_type(self.transfer.n_rooms, 0, "transfer.n_rooms")
        specs = self.train.specs()
        if len({s.name for s in specs}) != len(specs):
            raise ValidationError("train.learners names must be unique")
        for spec in specs + [self.transfer.spec()]:
            if spec.kind.startswith("gbdt"):
                spec.boost_config(self.seed).validate()
            elif spec.kind in ("forest", "extra_trees"):
                spec.forest_config(self.seed).validate()
        for name, section in (("train", self.train), ("stack", self.stack)):
            for params, cfg in expand_grid(section.base_config(), section.grid):
                try:
                    cfg.validate()
                except ValidationError as e:
                    raise ValidationError(f"{name}.grid entry {params}: {e}") from None
        if self.smooth.max_sweeps < 1:
            raise ValidationError(f"smooth.max_sweeps must be >= 1, got {self.smooth.max_sweeps}")
        if self.smooth.kernel is not None:
            SmoothKernel(np.asarray(self.smooth.kernel, dtype=np.float64))
        if self.eval.class_weights is not None:
            ClassWeights(np.asarray(self.eval.class_weights, dtype=np.float64))
        return self

    def to_dict(self):
        data = {"seed": self.seed}
        for name in _SECTIONS:
            data[name] = asdict(getattr(self, name))
        data["gen"].pop("seed")
        return data

    @classmethod
    def from_dict(cls, data) -> "RunConfig":
        if not isinstance(data, dict):
            raise ValidationError("config must be a JSON object")
        unknown = set(data) - set(_SECTIONS) - {"seed"}
        if unknown:
            raise ValidationError(f"unknown config sections {sorted(unknown)}")
        try:
            sections = {name: _section(cls_, data.get(name, {}), name) for name, cls_ in _SECTIONS.items()}
            return cls(seed=data.get("seed", 42), **sections).validate()
        except ValidationError:
            raise
        except (TypeError, ValueError) as e:
            # nested values (learner params, grid entries) reach the stage configs untyped
            raise ValidationError(f"invalid config value: {e}") from None


def load_run_config(path=None) -> RunConfig:
    if path is None:
        return RunConfig().validate()
    try:
        with open(path, "r", encoding="utf-8") as f:
            data = json.load(f)
    except FileNotFoundError:
        raise ValidationError(f"config file not found: {path}") from None
    except json.JSONDecodeError as e:
        raise ValidationError(f"cannot parse config {path}: {e}") from None
    return RunConfig.from_dict(data)
