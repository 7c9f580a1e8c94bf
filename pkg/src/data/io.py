import numpy as np
import pandas as pd

from ..errors import ValidationError
from .frame import KEY_COLUMNS, FrameTable, ScoreMatrix, label_columns

PREDICTION_DECIMALS = 6
STREAM_COLUMNS = ("participant_id", "channel", "t_ms", "value")


def _read_csv(path, **kwargs) -> pd.DataFrame:
    kwargs.setdefault("float_precision", "round_trip")
    try:
        return pd.read_csv(path, encoding="utf-8", **kwargs)
    except FileNotFoundError:
        raise ValidationError(f"file not found: {path}") from None
    except (pd.errors.ParserError, pd.errors.EmptyDataError, UnicodeDecodeError) as e:
        raise ValidationError(f"cannot parse {path}: {e}") from None


def write_frame_csv(table: FrameTable, path):
    table.to_frame().to_csv(path, index=False, na_rep="", encoding="utf-8", lineterminator="\n")


def read_frame_csv(path, n_classes=None) -> FrameTable:
    return FrameTable.from_frame(_read_csv(path), n_classes=n_classes)


def write_prediction_csv(table: FrameTable, P, path, producer=None):
    values = P.values if isinstance(P, ScoreMatrix) else np.asarray(P, dtype=np.float64)
    if values.shape[0] != len(table):
        raise ValidationError(f"prediction has {values.shape[0]} rows, table has {len(table)}")
    frame = pd.DataFrame({k: getattr(table, k) for k in KEY_COLUMNS})
    if producer is not None:
        frame["producer"] = producer
    preds = pd.DataFrame(values, columns=label_columns(values.shape[1], prefix="p"))
    frame = pd.concat([frame, preds], axis=1)
    frame.to_csv(path, index=False, float_format=f"%.{PREDICTION_DECIMALS}f", encoding="utf-8", lineterminator="\n")


def read_prediction_csv(path):
    """Returns (keys frame, ScoreMatrix). Rows are renormalized after the 6-decimal rounding."""
    frame = _read_csv(path)
    pcols = [c for c in frame.columns if c.startswith("p_")]
    if not pcols or any(k not in frame.columns for k in KEY_COLUMNS):
        raise ValidationError(f"{path} is not a prediction CSV")
    values = frame[pcols].to_numpy(dtype=np.float64)
    if np.any(values < 0) or not np.all(np.isfinite(values)):
        raise ValidationError(f"{path} contains invalid probabilities")
    sums = values.sum(axis=1, keepdims=True)
    if np.any(sums <= 0):
        raise ValidationError(f"{path} contains an all-zero prediction row")
    return frame[list(KEY_COLUMNS)], ScoreMatrix(values / sums, kind="probability")


def align_predictions(table: FrameTable, keys: pd.DataFrame, P: ScoreMatrix) -> ScoreMatrix:
    """Reorders prediction rows to the row order of `table`."""
    left = pd.DataFrame({k: getattr(table, k) for k in KEY_COLUMNS})
    right = keys.reset_index(drop=True).assign(_row=np.arange(len(keys)))
    merged = left.merge(right, on=list(KEY_COLUMNS), how="left")
    if merged["_row"].isna().any():
        raise ValidationError("prediction file does not cover every labelled row")
    return ScoreMatrix(P.values[merged["_row"].to_numpy(dtype=np.int64)], kind="probability")


def write_stream_csv(streams, path):
    frames = [pd.DataFrame({
        "participant_id": s.participant_id,
        "channel": s.channel,
        "t_ms": s.t_ms,
        "value": s.values,
    }) for s in streams]
    frame = pd.concat(frames, ignore_index=True) if frames else pd.DataFrame(columns=list(STREAM_COLUMNS))
    frame.to_csv(path, index=False, encoding="utf-8", lineterminator="\n")


def read_stream_csv(path, sample_rates):
    from ..pipelines.preprocess import RawStream

    frame = _read_csv(path)
    missing = [c for c in STREAM_COLUMNS if c not in frame.columns]
    if missing:
        raise ValidationError(f"{path} is missing stream columns {missing}")
    streams = []
    for (pid, channel), block in frame.groupby(["participant_id", "channel"], sort=True):
        streams.append(RawStream(
            participant_id=int(pid),
            channel=str(channel),
            sample_rate=float(sample_rates.get(str(channel).split("_")[0], 1.0)),
            t_ms=block["t_ms"].to_numpy(dtype=np.int64),
            values=block["value"].to_numpy(dtype=np.float64),
        ))
    return streams
