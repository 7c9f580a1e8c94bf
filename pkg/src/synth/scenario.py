from dataclasses import asdict, dataclass, field
from typing import Dict, List

import numpy as np

from ..data.frame import FrameTable
from ..errors import ValidationError
from ..pipelines.preprocess import DEFAULT_SAMPLE_RATES, RawStream, frame_from_streams
from ..utils import as_rng, log

_ACTIVITIES = (
    "ascend stairs", "descend stairs", "jump", "walk with load", "walk", "bending", "kneeling", "lying",
    "sitting", "squatting", "standing", "stand-to-bend", "kneel-to-stand", "lie-to-sit", "sit-to-lie",
    "sit-to-stand", "stand-to-kneel", "stand-to-sit", "bend-to-stand", "turn",
)
_ROOMS = ("living room", "kitchen", "hallway", "bathroom", "bedroom", "stairs", "study", "toilet")
_SPLIT_CODES = {"train": 0, "test": 1}


def activity_name_list() -> List[str]:
    return list(_ACTIVITIES)


def room_name_list(n_rooms: int) -> List[str]:
    return [_ROOMS[r] if r < len(_ROOMS) else f"room {r}" for r in range(n_rooms)]


@dataclass
class ScenarioConfig:
    n_train_participants: int = 10
    n_test_participants: int = 10
    sequence_seconds: int = 1800
    n_activities: int = 20
    n_rooms: int = 4
    n_annotators: int = 5
    annotator_jitter_seconds: int = 1
    self_transition_prob: float = 0.9
    left_handed_prob: float = 0.5
    room_change_prob: float = 0.2
    pir_false_positive: float = 0.02
    noise_scale: float = 0.5
    seed: int = 0

    def validate(self):
        counts = ("n_train_participants", "n_test_participants", "sequence_seconds", "n_activities", "n_rooms",
                  "n_annotators")
        for name in counts:
            value = getattr(self, name)
            if int(value) != value or value < 1:
                raise ValidationError(f"{name} must be an integer >= 1, got {value}")
        if self.n_activities > len(_ACTIVITIES):
            raise ValidationError(f"n_activities must be <= {len(_ACTIVITIES)}, got {self.n_activities}")
        if self.annotator_jitter_seconds < 0:
            raise ValidationError(f"annotator_jitter_seconds must be >= 0, got {self.annotator_jitter_seconds}")
        for name in ("self_transition_prob", "left_handed_prob", "room_change_prob", "pir_false_positive"):
            value = getattr(self, name)
            if not 0.0 <= value <= 1.0:
                raise ValidationError(f"{name} must lie in [0, 1], got {value}")
        if self.noise_scale < 0:
            raise ValidationError(f"noise_scale must be >= 0, got {self.noise_scale}")
        return self

    def to_dict(self):
        return asdict(self)


@dataclass(eq=False)
class Scenario:
    train: FrameTable
    test: FrameTable
    train_streams: List[RawStream]
    test_streams: List[RawStream]
    activity_paths: Dict[int, np.ndarray]
    room_paths: Dict[int, np.ndarray]
    left_handed: Dict[int, bool]
    manifest: Dict[str, object] = field(default_factory=dict)


@dataclass(eq=False)
class _House:
    """Scenario-wide emission parameters shared by every participant."""
    accel_means: np.ndarray
    camera_offsets: np.ndarray
    room_centers: np.ndarray
    allowed: np.ndarray
    walk: int


def _house(cfg: ScenarioConfig) -> _House:
    rng = as_rng((cfg.seed, 99))
    A, R = cfg.n_activities, cfg.n_rooms
    means = rng.normal(0.0, 1.0, size=(A, 3))
    means[:, 1] = np.abs(means[:, 1]) + 0.5
    allowed = rng.random((R, A)) < 0.6
    walk = _ACTIVITIES.index("walk") if A > _ACTIVITIES.index("walk") else -1
    always = [a for a in (walk, _ACTIVITIES.index("standing")) if 0 <= a < A]
    allowed[:, always] = True
    for r in range(R):
        if not allowed[r].any():
            allowed[r, 0] = True
    return _House(accel_means=means, camera_offsets=rng.normal(0.0, 1.0, size=A),
                  room_centers=np.linspace(-2.0, 2.0, R), allowed=allowed, walk=walk)


def _paths(cfg: ScenarioConfig, house: _House, rng):
    """Markov activity path plus a room path that only moves on walk seconds; walk is allowed in every room."""
    T = cfg.sequence_seconds
    activities = np.empty(T, dtype=np.int64)
    rooms = np.empty(T, dtype=np.int64)
    room = int(rng.integers(cfg.n_rooms))
    choices = np.flatnonzero(house.allowed[room])
    activity = int(choices[rng.integers(choices.size)])
    stay = rng.random(T)
    move = rng.random(T)
    for t in range(T):
        if t > 0:
            if stay[t] >= cfg.self_transition_prob:
                choices = np.flatnonzero(house.allowed[room])
                choices = choices[choices != activity]
                if choices.size:
                    activity = int(choices[rng.integers(choices.size)])
            if activity == house.walk and cfg.n_rooms > 1 and move[t] < cfg.room_change_prob:
                other = int(rng.integers(cfg.n_rooms - 1))
                room = other + (other >= room)
        activities[t] = activity
        rooms[t] = room
    return activities, rooms


def _soft_labels(path: np.ndarray, cfg: ScenarioConfig, rng) -> np.ndarray:
    """Fraction of annotators per class; each annotator shifts every boundary by up to the jitter."""
    T, A = path.size, cfg.n_annotators
    boundaries = np.flatnonzero(np.diff(path) != 0) + 1
    segment_activity = np.concatenate([[path[0]], path[boundaries]])
    counts = np.zeros((T, cfg.n_activities))
    seconds = np.arange(T)
    j = cfg.annotator_jitter_seconds
    for _ in range(A):
        shifted = boundaries + rng.integers(-j, j + 1, size=boundaries.size)
        shifted = np.maximum.accumulate(np.clip(shifted, 0, T))
        segment = np.searchsorted(shifted, seconds, side="right")
        counts[seconds, segment_activity[segment]] += 1.0
    return counts / A


def _streams(pid: int, activities, rooms, left_handed: bool, cfg: ScenarioConfig, house: _House, rng) -> List[RawStream]:
    T = activities.size
    noise = cfg.noise_scale
    streams = []

    rate = DEFAULT_SAMPLE_RATES["acc"]
    per_second = int(rate)
    t_ms = np.arange(T * per_second, dtype=np.int64) * int(1000 / rate)
    sample_activity = np.repeat(activities, per_second)
    means = house.accel_means[sample_activity].copy()
    if left_handed:
        means[:, :2] *= -1.0
    for axis, name in enumerate(("acc_x", "acc_y", "acc_z")):
        values = means[:, axis] + noise * rng.normal(size=t_ms.size)
        streams.append(RawStream(pid, name, rate, t_ms, values))

    rate = DEFAULT_SAMPLE_RATES["cam"]
    per_second = int(rate)
    seen = np.flatnonzero(rooms < cfg.n_rooms - 1)
    cam_t = (seen[:, None] * 1000 + np.arange(per_second)[None, :] * int(1000 / rate)).ravel()
    cam_seconds = np.repeat(seen, per_second)
    cam_x = house.camera_offsets[activities[cam_seconds]] + noise * rng.normal(size=cam_t.size)
    cam_y = house.room_centers[rooms[cam_seconds]] + noise * rng.normal(size=cam_t.size)
    streams.append(RawStream(pid, "cam_x", rate, cam_t, cam_x))
    streams.append(RawStream(pid, "cam_y", rate, cam_t, cam_y))

    pir_t = np.arange(T, dtype=np.int64) * 1000
    for r in range(cfg.n_rooms):
        present = (rooms == r).astype(np.float64)
        flip = rng.random(T) < cfg.pir_false_positive
        streams.append(RawStream(pid, f"pir_{r}", DEFAULT_SAMPLE_RATES["pir"], pir_t, np.abs(present - flip)))
    return streams


def generate_scenario(cfg: ScenarioConfig) -> Scenario:
    """Seeded synthetic house: Markov activities, rooms, jittered multi-annotator labels and sensor streams.

    Train participants are 1..n_train, test participants follow. Test tables carry labels for scoring
    but never the room.
    """
    cfg.validate()
    house = _house(cfg)
    n_train = cfg.n_train_participants
    splits = {"train": range(1, n_train + 1),
              "test": range(n_train + 1, n_train + cfg.n_test_participants + 1)}
    out = {}
    paths, room_paths, handed = {}, {}, {}
    for split, pids in splits.items():
        streams, labels, rooms = [], {}, {}
        for pid in pids:
            rng = as_rng((cfg.seed, _SPLIT_CODES[split], pid))
            activities, room_path = _paths(cfg, house, rng)
            handed[pid] = bool(rng.random() < cfg.left_handed_prob)
            labels[pid] = _soft_labels(activities, cfg, rng)
            rooms[pid] = room_path
            paths[pid], room_paths[pid] = activities, room_path
            streams += _streams(pid, activities, room_path, handed[pid], cfg, house, rng)
        table = frame_from_streams(streams, cfg.n_activities, soft_labels=labels,
                                   rooms=rooms if split == "train" else None)
        out[split] = (table, streams)
    log(f"[Synth] generated {n_train} train and {cfg.n_test_participants} test participants "
        f"of {cfg.sequence_seconds} s", message_type='info')
    manifest = {"config": cfg.to_dict(), "seed": cfg.seed, "activities": activity_name_list()[:cfg.n_activities],
                "rooms": room_name_list(cfg.n_rooms), "camera_rooms": list(range(cfg.n_rooms - 1)),
                "left_handed": {str(p): v for p, v in sorted(handed.items())}}
    return Scenario(train=out["train"][0], test=out["test"][0], train_streams=out["train"][1],
                    test_streams=out["test"][1], activity_paths=paths, room_paths=room_paths, left_handed=handed,
                    manifest=manifest)
