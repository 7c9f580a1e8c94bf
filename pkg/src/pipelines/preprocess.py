from dataclasses import dataclass, replace
from typing import Dict, Iterable, List, Optional, Sequence, Tuple, Union

import numpy as np
import pandas as pd

from ..data.frame import FrameTable, lag_column, lead_column
from ..errors import ValidationError
from ..utils import as_rng, log

STATS = ("mean", "median", "min", "max", "std")
DEFAULT_SAMPLE_RATES = {"acc": 20.0, "cam": 25.0, "pir": 1.0}


@dataclass(frozen=True, eq=False)
class RawStream:
    participant_id: int
    channel: str
    sample_rate: float
    t_ms: np.ndarray
    values: np.ndarray

    def __post_init__(self):
        t = np.asarray(self.t_ms, dtype=np.int64)
        v = np.asarray(self.values, dtype=np.float64)
        if t.shape != v.shape or t.ndim != 1:
            raise ValidationError(f"stream {self.channel!r}: timestamps and values must be equal-length vectors")
        if not self.sample_rate > 0:
            raise ValidationError(f"stream {self.channel!r}: sample_rate must be > 0, got {self.sample_rate}")
        if t.size > 1 and np.any(np.diff(t) < 0):
            raise ValidationError(f"stream {self.channel!r}: timestamps must be non-decreasing")
        object.__setattr__(self, "t_ms", t)
        object.__setattr__(self, "values", v)

    def __len__(self):
        return self.t_ms.size


@dataclass
class SplitPlan:
    duration_range: Tuple[int, int] = (10, 30)
    gap_range: Tuple[int, int] = (10, 30)
    seed: int = 0
    permute: bool = True

    def validate(self):
        for name, (lo, hi) in (("duration_range", self.duration_range), ("gap_range", self.gap_range)):
            if int(lo) != lo or int(hi) != hi or not 0 < lo <= hi:
                raise ValidationError(f"{name} must satisfy 0 < min <= max with integer bounds, got {[lo, hi]}")
        return self


def aggregate_second(stream: RawStream, origin_ms: Optional[int] = None) -> pd.DataFrame:
    """Five statistics per whole second; seconds without samples are all-NaN rows.

    Seconds are counted from `origin_ms`, by default the start of the first sample's second.
    """
    if len(stream) == 0:
        raise ValidationError(f"stream {stream.channel!r} of participant {stream.participant_id} is empty")
    if origin_ms is None:
        origin_ms = (int(stream.t_ms[0]) // 1000) * 1000
    if stream.t_ms[0] < origin_ms:
        raise ValidationError(f"stream {stream.channel!r} starts before origin {origin_ms} ms")
    second = (stream.t_ms - origin_ms) // 1000
    n_seconds = int(second[-1]) + 1
    grouped = pd.Series(stream.values).groupby(second)
    stats = pd.DataFrame({
        "mean": grouped.mean(),
        "median": grouped.median(),
        "min": grouped.min(),
        "max": grouped.max(),
        "std": grouped.std(ddof=0),
    })
    stats = stats.reindex(pd.RangeIndex(n_seconds))
    stats.index.name = "second"
    return stats


def frame_from_streams(streams: Sequence[RawStream], n_classes: int, soft_labels: Optional[Dict[int, np.ndarray]] = None,
                       rooms: Optional[Dict[int, np.ndarray]] = None,
                       channels: Optional[Sequence[str]] = None) -> FrameTable:
    """One subsequence per participant with `<channel>_<stat>` columns aligned on absolute seconds from t=0.

    `channels` fixes the column set; channels no participant recorded become all-NaN columns.
    """
    if not streams:
        raise ValidationError("frame_from_streams needs at least one stream")
    seen = {s.channel for s in streams}
    channels = sorted(seen) if channels is None else list(channels)
    unknown = seen - set(channels)
    if unknown:
        raise ValidationError(f"streams carry channels {sorted(unknown)} outside the requested column set")
    columns = [f"{c}_{stat}" for c in channels for stat in STATS]
    by_participant: Dict[int, List[RawStream]] = {}
    for s in streams:
        by_participant.setdefault(s.participant_id, []).append(s)

    blocks = []
    for pid in sorted(by_participant):
        parts = {s.channel: aggregate_second(s, origin_ms=0) for s in by_participant[pid] if len(s)}
        if not parts:
            raise ValidationError(f"participant {pid} has only empty streams")
        length = max(len(p) for p in parts.values())
        if soft_labels is not None:
            if pid not in soft_labels:
                raise ValidationError(f"participant {pid} has streams but no labels")
            length = len(soft_labels[pid])
        index = pd.RangeIndex(length)
        data = {"participant_id": np.full(length, pid), "subsequence_id": np.zeros(length, dtype=np.int64),
                "second_index": np.arange(length)}
        for c in channels:
            stats = parts.get(c)
            for stat in STATS:
                data[f"{c}_{stat}"] = np.full(length, np.nan) if stats is None else stats[stat].reindex(index).to_numpy()
        if rooms is not None:
            data["room"] = np.asarray(rooms[pid], dtype=np.int64)
        if soft_labels is not None:
            labels = np.asarray(soft_labels[pid], dtype=np.float64)
            for c in range(n_classes):
                data[f"y_{c:02d}"] = labels[:, c]
        blocks.append(pd.DataFrame(data))
    frame = pd.concat(blocks, ignore_index=True)
    table = FrameTable.from_frame(frame, n_classes=n_classes)
    return table.select_columns(columns)


def _flip_columns(prefix: str, columns: Sequence[str]):
    names = {stat: f"{prefix}{stat}" for stat in STATS}
    return {stat: name for stat, name in names.items() if name in columns}


def correct_handedness(t: FrameTable, y_column="acc_y_mean", flip_prefixes=("acc_x_", "acc_y_")):
    """Negates x/y accelerometer aggregates of participants whose median y sign opposes the majority.

    Returns the corrected table and a {participant_id: flipped} map.
    """
    if y_column not in t.columns:
        raise ValidationError(f"handedness correction needs column {y_column!r}")
    y = t.column(y_column)
    medians = pd.Series(y).groupby(t.participant_id).median()
    signs = np.sign(medians.to_numpy())
    majority = 1.0 if np.sum(signs > 0) >= np.sum(signs < 0) else -1.0

    features = t.features.copy()
    flags = {}
    for pid, median in medians.items():
        pid = int(pid)
        if not np.isfinite(median) or median == 0.0:
            log(f"[Handedness] participant {pid}: median {y_column} is {median}; left unflipped", message_type='warning')
            flags[pid] = False
            continue
        flags[pid] = bool(np.sign(median) != majority)
        if not flags[pid]:
            continue
        rows = t.participant_id == pid
        for prefix in flip_prefixes:
            cols = _flip_columns(prefix, t.columns)
            for stat in ("mean", "median"):
                if stat in cols:
                    j = t.column_index(cols[stat])
                    features[rows, j] = -features[rows, j]
            if "min" in cols and "max" in cols:
                jmin, jmax = t.column_index(cols["min"]), t.column_index(cols["max"])
                old_min, old_max = features[rows, jmin].copy(), features[rows, jmax].copy()
                features[rows, jmin] = -old_max
                features[rows, jmax] = -old_min
    flipped = sorted(p for p, f in flags.items() if f)
    if flipped:
        log(f"[Handedness] flipped x/y accelerometer columns of participants {flipped}", message_type='info')
    return t.replace(features=features), flags


def sample_windows(length: int, plan: SplitPlan, rng) -> List[Tuple[int, int]]:
    """Kept [start, stop) windows of one sequence: duration then gap, repeated until the sequence ends."""
    dmin, dmax = plan.duration_range
    gmin, gmax = plan.gap_range
    windows = []
    pos = 0
    while pos < length:
        duration = int(rng.integers(dmin, dmax + 1))
        if pos + duration > length:
            if length - pos >= dmin:
                windows.append((pos, length))
            break
        windows.append((pos, pos + duration))
        pos += duration + int(rng.integers(gmin, gmax + 1))
    return windows


def split_into_subsequences(t: FrameTable, plan: SplitPlan) -> FrameTable:
    plan.validate()
    t = t.sort_keys()
    pieces, sub_ids, seconds = [], [], []
    next_id = 0
    for pid in np.unique(t.participant_id):
        rows = np.flatnonzero(t.participant_id == pid)
        if np.unique(t.subsequence_id[rows]).size != 1:
            raise ValidationError(f"participant {pid} must be a single contiguous sequence before splitting")
        length = rows.size
        if length < plan.duration_range[0]:
            log(f"[Split] participant {pid}: sequence of {length} s is shorter than {plan.duration_range[0]} s; kept whole", message_type='warning')
            windows = [(0, length)]
        else:
            windows = sample_windows(length, plan, as_rng(plan.seed + int(pid)))
        for start, stop in windows:
            pieces.append(rows[start:stop])
            sub_ids.append(np.full(stop - start, next_id, dtype=np.int64))
            seconds.append(np.arange(stop - start, dtype=np.int64))
            next_id += 1
    if not pieces:
        return t.take(np.zeros(0, dtype=np.int64))
    index = np.concatenate(pieces)
    sub = np.concatenate(sub_ids)
    if plan.permute:
        sub = as_rng(plan.seed).permutation(next_id)[sub]
    out = t.take(index).replace(subsequence_id=sub, second_index=np.concatenate(seconds))
    log(f"[Split] {len(t)} rows -> {next_id} subsequences, {len(out)} rows kept", message_type='normal')
    return out.sort_keys()


def resplit_bagging(t: FrameTable, plan: SplitPlan, seeds: Iterable[int]):
    for seed in seeds:
        yield seed, split_into_subsequences(t, replace(plan, seed=int(seed)))


def _orders(orders: Union[int, Iterable[int]]) -> List[int]:
    orders = list(range(1, orders + 1)) if isinstance(orders, (int, np.integer)) else [int(k) for k in orders]
    if any(k < 1 for k in orders):
        raise ValidationError(f"lag/lead orders must be >= 1, got {orders}")
    return orders


def _grouped(t: FrameTable, base_columns: Sequence[str]):
    missing = [c for c in base_columns if c not in t.columns]
    if missing:
        raise ValidationError(f"unknown base columns {missing}")
    frame = pd.DataFrame(t.features[:, [t.column_index(c) for c in base_columns]], columns=list(base_columns))
    return frame.groupby([t.participant_id, t.subsequence_id], sort=False)


def add_lag_lead(t: FrameTable, base_columns: Sequence[str], orders: Union[int, Iterable[int]] = 10) -> FrameTable:
    """Adds lag{k}_<f> and lead{k}_<f>; values never cross a subsequence boundary."""
    orders = _orders(orders)
    t = t.sort_keys()
    grouped = _grouped(t, base_columns)
    names, blocks = [], []
    for k in orders:
        blocks.append(grouped.shift(k).to_numpy())
        names += [lag_column(c, k) for c in base_columns]
    for k in orders:
        blocks.append(grouped.shift(-k).to_numpy())
        names += [lead_column(c, k) for c in base_columns]
    if not blocks:
        return t
    return t.with_columns(names, np.hstack(blocks))


def add_differences(t: FrameTable, base_columns: Sequence[str], order: int = 1) -> FrameTable:
    """First (and, for order 2, second) differences inside each subsequence."""
    if order not in (1, 2):
        raise ValidationError(f"difference order must be 1 or 2, got {order}")
    t = t.sort_keys()
    first = _grouped(t, base_columns).diff()
    names = [f"diff1_{c}" for c in base_columns]
    blocks = [first.to_numpy()]
    if order == 2:
        second = first.groupby([t.participant_id, t.subsequence_id], sort=False).diff()
        names += [f"diff2_{c}" for c in base_columns]
        blocks.append(second.to_numpy())
    return t.with_columns(names, np.hstack(blocks))
