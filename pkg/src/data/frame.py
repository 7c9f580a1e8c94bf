import re
from dataclasses import dataclass
from typing import List, Optional, Sequence, Tuple

import numpy as np
import pandas as pd

from ..errors import ValidationError
from ..utils import log

KEY_COLUMNS = ("participant_id", "subsequence_id", "second_index")
ROOM_COLUMN = "room"
ROW_SUM_TOL = 1e-9


def label_columns(n_classes: int, prefix: str = "y") -> List[str]:
    return [f"{prefix}_{c:02d}" for c in range(n_classes)]


def lag_column(name: str, k: int) -> str:
    return f"lag{k}_{name}"


def lead_column(name: str, k: int) -> str:
    return f"lead{k}_{name}"


def is_lag_lead_column(name: str) -> bool:
    return re.match(r"^(lag|lead)\d+_", name) is not None


def _frozen(values, dtype):
    arr = np.array(values, dtype=dtype, copy=True)
    arr.flags.writeable = False
    return arr


def check_stochastic(values: np.ndarray, name: str):
    if values.ndim != 2:
        raise ValidationError(f"{name} must be a 2-D matrix, got shape {values.shape}")
    if not np.all(np.isfinite(values)):
        raise ValidationError(f"{name} contains non-finite entries")
    if np.any(values < 0.0) or np.any(values > 1.0):
        raise ValidationError(f"{name} entries must lie in [0, 1]")
    sums = values.sum(axis=1)
    bad = np.flatnonzero(np.abs(sums - 1.0) > ROW_SUM_TOL)
    if bad.size:
        raise ValidationError(f"{name} row {int(bad[0])} sums to {sums[bad[0]]!r}, expected 1")


@dataclass(frozen=True, eq=False)
class SoftLabelMatrix:
    values: np.ndarray

    def __post_init__(self):
        values = _frozen(self.values, np.float64)
        check_stochastic(values, "SoftLabelMatrix")
        object.__setattr__(self, "values", values)

    @property
    def shape(self):
        return self.values.shape

    @classmethod
    def one_hot(cls, labels, n_classes: int) -> "SoftLabelMatrix":
        labels = np.asarray(labels, dtype=np.int64)
        if labels.size and (labels.min() < 0 or labels.max() >= n_classes):
            raise ValidationError(f"labels must lie in [0, {n_classes}), got range [{labels.min()}, {labels.max()}]")
        values = np.zeros((labels.size, n_classes))
        values[np.arange(labels.size), labels] = 1.0
        return cls(values)


@dataclass(frozen=True, eq=False)
class ClassWeights:
    weights: np.ndarray

    def __post_init__(self):
        weights = _frozen(self.weights, np.float64)
        if weights.ndim != 1 or weights.size == 0:
            raise ValidationError(f"class weights must be a non-empty vector, got shape {weights.shape}")
        if not np.all(np.isfinite(weights)) or np.any(weights <= 0):
            raise ValidationError(f"class weights must be positive and finite, got {weights.tolist()}")
        object.__setattr__(self, "weights", weights)

    @classmethod
    def uniform(cls, n_classes: int) -> "ClassWeights":
        return cls(np.ones(n_classes))

    def __len__(self):
        return self.weights.size


@dataclass(frozen=True, eq=False)
class ScoreMatrix:
    values: np.ndarray
    kind: str = "raw"

    def __post_init__(self):
        values = _frozen(self.values, np.float64)
        if self.kind == "probability":
            check_stochastic(values, "ScoreMatrix(probability)")
        elif self.kind == "raw":
            if values.ndim != 2:
                raise ValidationError(f"ScoreMatrix must be 2-D, got shape {values.shape}")
            if not np.all(np.isfinite(values)):
                raise ValidationError("ScoreMatrix(raw) contains non-finite entries")
        else:
            raise ValidationError(f"unknown ScoreMatrix kind {self.kind!r}")
        object.__setattr__(self, "values", values)

    @property
    def shape(self):
        return self.values.shape


def values_of(x) -> np.ndarray:
    """Unwraps the matrix wrappers; plain arrays pass through."""
    if isinstance(x, (SoftLabelMatrix, ScoreMatrix)):
        return x.values
    if isinstance(x, ClassWeights):
        return x.weights
    return np.asarray(x, dtype=np.float64)


@dataclass(frozen=True)
class FrameRow:
    participant_id: int
    subsequence_id: int
    second_index: int
    features: Tuple[Optional[float], ...]
    room: Optional[int] = None
    soft_label: Optional[Tuple[float, ...]] = None


@dataclass(frozen=True, eq=False)
class FrameTable:
    """Per-second rows keyed by (participant, subsequence, second).

    Missing feature cells are NaN; `room` uses -1 for an unknown room.
    """
    participant_id: np.ndarray
    subsequence_id: np.ndarray
    second_index: np.ndarray
    features: np.ndarray
    columns: Tuple[str, ...]
    n_classes: int
    room: Optional[np.ndarray] = None
    soft_labels: Optional[np.ndarray] = None

    def __post_init__(self):
        object.__setattr__(self, "participant_id", _frozen(self.participant_id, np.int64))
        object.__setattr__(self, "subsequence_id", _frozen(self.subsequence_id, np.int64))
        object.__setattr__(self, "second_index", _frozen(self.second_index, np.int64))
        n = self.participant_id.size
        features = _frozen(self.features, np.float64)
        if features.ndim == 1 and features.size == 0:
            features = _frozen(np.zeros((n, 0)), np.float64)
        object.__setattr__(self, "features", features)
        object.__setattr__(self, "columns", tuple(self.columns))
        if self.room is not None:
            object.__setattr__(self, "room", _frozen(self.room, np.int64))
        if self.soft_labels is not None:
            object.__setattr__(self, "soft_labels", _frozen(self.soft_labels, np.float64))
        if self.subsequence_id.size != n or self.second_index.size != n or features.shape[0] != n:
            raise ValidationError("FrameTable key and feature arrays must have the same number of rows")
        if features.ndim != 2:
            raise ValidationError(f"features must be 2-D, got shape {features.shape}")
        if self.room is not None and self.room.size != n:
            raise ValidationError("room column length does not match the table")
        if self.soft_labels is not None and self.soft_labels.shape[0] != n:
            raise ValidationError("soft label rows do not match the table")

    def __len__(self):
        return self.participant_id.size

    @property
    def has_room(self) -> bool:
        return self.room is not None

    def column_index(self, name: str) -> int:
        try:
            return self.columns.index(name)
        except ValueError:
            raise ValidationError(f"unknown column {name!r}") from None

    def column(self, name: str) -> np.ndarray:
        return self.features[:, self.column_index(name)]

    def labels(self) -> SoftLabelMatrix:
        if self.soft_labels is None:
            raise ValidationError("table carries no soft labels")
        return SoftLabelMatrix(self.soft_labels)

    def row(self, i: int) -> FrameRow:
        feats = tuple(None if np.isnan(v) else float(v) for v in self.features[i])
        room = None
        if self.room is not None and self.room[i] >= 0:
            room = int(self.room[i])
        label = None if self.soft_labels is None else tuple(float(v) for v in self.soft_labels[i])
        return FrameRow(int(self.participant_id[i]), int(self.subsequence_id[i]), int(self.second_index[i]),
                        feats, room, label)

    def rows(self):
        for i in range(len(self)):
            yield self.row(i)

    def take(self, index) -> "FrameTable":
        index = np.asarray(index)
        return FrameTable(
            participant_id=self.participant_id[index],
            subsequence_id=self.subsequence_id[index],
            second_index=self.second_index[index],
            features=self.features[index],
            columns=self.columns,
            n_classes=self.n_classes,
            room=None if self.room is None else self.room[index],
            soft_labels=None if self.soft_labels is None else self.soft_labels[index],
        )

    def replace(self, **changes) -> "FrameTable":
        fields = dict(
            participant_id=self.participant_id, subsequence_id=self.subsequence_id,
            second_index=self.second_index, features=self.features, columns=self.columns,
            n_classes=self.n_classes, room=self.room, soft_labels=self.soft_labels,
        )
        fields.update(changes)
        return FrameTable(**fields)

    def with_columns(self, names: Sequence[str], values: np.ndarray) -> "FrameTable":
        values = np.asarray(values, dtype=np.float64).reshape(len(self), len(names))
        clash = set(names) & set(self.columns)
        if clash:
            raise ValidationError(f"columns already present: {sorted(clash)}")
        return self.replace(features=np.hstack([self.features, values]), columns=self.columns + tuple(names))

    def select_columns(self, names: Sequence[str]) -> "FrameTable":
        index = [self.column_index(n) for n in names]
        return self.replace(features=self.features[:, index], columns=tuple(names))

    def sort_keys(self) -> "FrameTable":
        order = np.lexsort((self.second_index, self.subsequence_id, self.participant_id))
        return self.take(order)

    def groups(self) -> np.ndarray:
        """Integer id per row that changes exactly at (participant, subsequence) boundaries."""
        if len(self) == 0:
            return np.zeros(0, dtype=np.int64)
        change = (np.diff(self.participant_id) != 0) | (np.diff(self.subsequence_id) != 0)
        return np.concatenate([[0], np.cumsum(change)]).astype(np.int64)

    def to_frame(self) -> pd.DataFrame:
        data = {
            "participant_id": self.participant_id,
            "subsequence_id": self.subsequence_id,
            "second_index": self.second_index,
        }
        frame = pd.DataFrame(data)
        if self.columns:
            frame = pd.concat([frame, pd.DataFrame(self.features, columns=list(self.columns))], axis=1)
        if self.room is not None:
            frame[ROOM_COLUMN] = pd.array(np.where(self.room >= 0, self.room, pd.NA), dtype="Int64")
        if self.soft_labels is not None:
            labels = pd.DataFrame(self.soft_labels, columns=label_columns(self.n_classes))
            frame = pd.concat([frame, labels], axis=1)
        return frame

    @classmethod
    def from_frame(cls, frame: pd.DataFrame, n_classes: Optional[int] = None) -> "FrameTable":
        missing = [k for k in KEY_COLUMNS if k not in frame.columns]
        if missing:
            raise ValidationError(f"frame table is missing key columns {missing}")
        ycols = [c for c in frame.columns if c.startswith("y_")]
        if n_classes is None:
            n_classes = len(ycols)
        if ycols and len(ycols) != n_classes:
            raise ValidationError(f"expected {n_classes} label columns, found {len(ycols)}")
        if ycols and ycols != label_columns(n_classes):
            raise ValidationError(f"label columns must be named {label_columns(n_classes)[0]}..")
        reserved = set(KEY_COLUMNS) | set(ycols) | {ROOM_COLUMN}
        feature_cols = [c for c in frame.columns if c not in reserved]
        room = None
        if ROOM_COLUMN in frame.columns:
            room = pd.to_numeric(frame[ROOM_COLUMN], errors="coerce").fillna(-1).to_numpy(dtype=np.int64)
        features = frame[feature_cols].to_numpy(dtype=np.float64) if feature_cols else np.zeros((len(frame), 0))
        return cls(
            participant_id=frame["participant_id"].to_numpy(dtype=np.int64),
            subsequence_id=frame["subsequence_id"].to_numpy(dtype=np.int64),
            second_index=frame["second_index"].to_numpy(dtype=np.int64),
            features=features,
            columns=tuple(feature_cols),
            n_classes=n_classes,
            room=room,
            soft_labels=frame[ycols].to_numpy(dtype=np.float64) if ycols else None,
        )


def harden_labels(Y) -> np.ndarray:
    if not isinstance(Y, SoftLabelMatrix):
        Y = SoftLabelMatrix(Y)
    # np.argmax returns the first maximum, i.e. the lowest class index on ties
    return np.argmax(Y.values, axis=1).astype(np.int64)


def class_weights_from_frequency(Y) -> ClassWeights:
    if not isinstance(Y, SoftLabelMatrix):
        Y = SoftLabelMatrix(Y)
    n, n_classes = Y.shape
    if n == 0:
        raise ValidationError("cannot derive class weights from an empty label matrix")
    freq = Y.values.sum(axis=0) / n
    present = freq > 0
    weights = np.empty(n_classes)
    weights[present] = 1.0 / freq[present]
    if not present.all():
        absent = np.flatnonzero(~present).tolist()
        log(f"[Weights] classes {absent} have zero label mass; using the largest computed weight for them", message_type='warning')
        weights[~present] = weights[present].max() if present.any() else 1.0
    weights *= n_classes / weights.sum()
    return ClassWeights(weights)


def validate_table(t: FrameTable) -> List[str]:
    violations = []
    n = len(t)
    width = len(t.columns)
    if t.features.shape[1] != width:
        violations.append(f"table: feature arity {t.features.shape[1]} differs from {width} column names")

    keys = pd.DataFrame({"p": t.participant_id, "s": t.subsequence_id, "i": t.second_index})
    dup = keys.duplicated(keep="first").to_numpy()
    for i in np.flatnonzero(dup):
        violations.append(
            f"row {i}: uniqueness: key ({t.participant_id[i]}, {t.subsequence_id[i]}, {t.second_index[i]}) is duplicated")

    for (p, s), block in keys.groupby(["p", "s"], sort=True):
        seconds = np.unique(block["i"].to_numpy())
        if seconds.size and not np.array_equal(seconds, np.arange(seconds.size)):
            violations.append(
                f"row {int(block.index[0])}: consecutive: subsequence ({p}, {s}) seconds are not 0..{seconds.size - 1}")

    if t.soft_labels is not None:
        labels = t.soft_labels
        if labels.shape != (n, t.n_classes):
            violations.append(f"table: soft labels have shape {labels.shape}, expected {(n, t.n_classes)}")
        else:
            sums = labels.sum(axis=1)
            for i in np.flatnonzero(np.abs(sums - 1.0) > ROW_SUM_TOL):
                violations.append(f"row {i}: normalization: soft label sums to {sums[i]:.12g}")
            for i in np.flatnonzero(np.any((labels < 0) | (labels > 1) | ~np.isfinite(labels), axis=1)):
                violations.append(f"row {i}: range: soft label entries must lie in [0, 1]")
    return violations


def concat_tables(tables: Sequence[FrameTable]) -> FrameTable:
    """Row-wise union of tables with identical columns; room/labels are kept only when every table has them."""
    if not tables:
        raise ValidationError("concat_tables needs at least one table")
    first = tables[0]
    for t in tables[1:]:
        if t.columns != first.columns or t.n_classes != first.n_classes:
            raise ValidationError("tables to concatenate must share columns and class count")
    rooms = [t.room for t in tables]
    labels = [t.soft_labels for t in tables]
    return FrameTable(
        participant_id=np.concatenate([t.participant_id for t in tables]),
        subsequence_id=np.concatenate([t.subsequence_id for t in tables]),
        second_index=np.concatenate([t.second_index for t in tables]),
        features=np.vstack([t.features for t in tables]),
        columns=first.columns,
        n_classes=first.n_classes,
        room=np.concatenate(rooms) if all(r is not None for r in rooms) else None,
        soft_labels=np.vstack(labels) if all(y is not None for y in labels) else None,
    )
