import numpy as np
import pytest
from scipy.stats import chisquare

from src.data import FrameTable, validate_table
from src.errors import ValidationError
from src.pipelines import (STATS, RawStream, SplitPlan, add_differences, add_lag_lead, aggregate_second,
                           correct_handedness, frame_from_streams, resplit_bagging, sample_windows,
                           split_into_subsequences)

HAND_COLUMNS = tuple(f"acc_{axis}_{stat}" for axis in ("x", "y") for stat in STATS)


def sequence_table(lengths, columns=("t",), n_classes=2):
    """One subsequence per participant; the first feature column holds the original second."""
    pid = np.concatenate([np.full(n, p + 1) for p, n in enumerate(lengths)])
    sec = np.concatenate([np.arange(n) for n in lengths])
    features = np.column_stack([sec.astype(np.float64)] + [np.zeros(sec.size)] * (len(columns) - 1))
    labels = np.tile(np.eye(n_classes)[0], (sec.size, 1))
    return FrameTable(participant_id=pid, subsequence_id=np.zeros(sec.size), second_index=sec, features=features,
                      columns=columns, n_classes=n_classes, soft_labels=labels)


def hand_table(y_means):
    """One row per participant with x/y accelerometer stats; acc_y_mean is the given value."""
    rows = []
    for y in y_means:
        rows.append([1.0, 1.5, 0.5, 2.0, 0.3, y, y, y - 1.0, y + 2.0, 0.4])
    pid = np.arange(1, len(y_means) + 1)
    return FrameTable(participant_id=pid, subsequence_id=np.zeros(len(pid)), second_index=np.zeros(len(pid)),
                      features=np.array(rows), columns=HAND_COLUMNS, n_classes=1)


def test_aggregate_second_statistics():
    stream = RawStream(1, "acc_x", 20.0, np.arange(20) * 50, np.arange(1, 21, dtype=np.float64))
    stats = aggregate_second(stream)
    assert len(stats) == 1
    row = stats.iloc[0]
    assert row["mean"] == pytest.approx(10.5)
    assert row["median"] == pytest.approx(10.5)
    assert row["min"] == 1.0
    assert row["max"] == 20.0
    assert row["std"] == pytest.approx(np.sqrt(399 / 12))


def test_aggregate_second_marks_empty_seconds_missing():
    stream = RawStream(1, "cam_x", 25.0, np.array([0, 500, 2100]), np.array([1.0, 3.0, 7.0]))
    stats = aggregate_second(stream)
    assert len(stats) == 3
    assert stats.iloc[0]["mean"] == pytest.approx(2.0)
    assert stats.iloc[1].isna().all()
    assert stats.iloc[2]["std"] == 0.0


def test_raw_stream_validation():
    with pytest.raises(ValidationError):
        RawStream(1, "acc_x", 20.0, np.array([10, 5]), np.array([1.0, 2.0]))
    with pytest.raises(ValidationError):
        RawStream(1, "acc_x", 0.0, np.array([0]), np.array([1.0]))
    with pytest.raises(ValidationError):
        aggregate_second(RawStream(1, "acc_x", 20.0, np.zeros(0), np.zeros(0)))


def test_frame_from_streams_builds_channel_stat_columns():
    streams = [
        RawStream(1, "pir_0", 1.0, np.array([0, 1000, 2000]), np.array([1.0, 0.0, 1.0])),
        RawStream(1, "acc_x", 20.0, np.arange(40) * 50, np.ones(40)),
    ]
    labels = {1: np.array([[1.0, 0.0], [0.5, 0.5], [0.0, 1.0]])}
    t = frame_from_streams(streams, 2, soft_labels=labels, rooms={1: np.array([0, 0, 1])})
    assert t.columns == tuple(f"acc_x_{s}" for s in STATS) + tuple(f"pir_0_{s}" for s in STATS)
    assert len(t) == 3
    assert np.isnan(t.column("acc_x_mean")[2])
    np.testing.assert_array_equal(t.column("pir_0_max"), [1.0, 0.0, 1.0])
    np.testing.assert_array_equal(t.room, [0, 0, 1])
    assert validate_table(t) == []


def test_handedness_flips_minority_participant():
    t = hand_table([2.0, 1.5, -1.0])
    out, flags = correct_handedness(t)
    assert flags == {1: False, 2: False, 3: True}
    row = dict(zip(out.columns, out.features[2]))
    assert row["acc_y_mean"] == 1.0
    assert row["acc_y_median"] == 1.0
    # min/max swap under negation
    assert row["acc_y_min"] == -1.0
    assert row["acc_y_max"] == 2.0
    assert row["acc_x_min"] == -2.0
    assert row["acc_x_max"] == -0.5
    assert row["acc_x_std"] == 0.3
    np.testing.assert_array_equal(out.features[:2], t.features[:2])
    assert np.all(out.column("acc_y_mean") > 0)


def test_handedness_tie_goes_to_positive_majority():
    _, flags = correct_handedness(hand_table([1.0, -1.0]))
    assert flags == {1: False, 2: True}


def test_handedness_zero_median_is_left_alone(caplog):
    with caplog.at_level("WARNING", logger="softbrier"):
        out, flags = correct_handedness(hand_table([1.0, 0.0]))
    assert flags[2] is False
    assert "left unflipped" in caplog.text


def test_handedness_needs_y_column():
    with pytest.raises(ValidationError):
        correct_handedness(sequence_table([5]))


def test_split_windows_and_gaps_stay_in_range():
    t = sequence_table([1000, 700])
    out = split_into_subsequences(t, SplitPlan(seed=3))
    assert validate_table(out) == []
    ids = np.unique(out.subsequence_id)
    assert ids.size == np.unique(out.subsequence_id[out.participant_id == 1]).size + \
        np.unique(out.subsequence_id[out.participant_id == 2]).size
    for pid in (1, 2):
        rows = out.participant_id == pid
        starts, stops = [], []
        for s in np.unique(out.subsequence_id[rows]):
            original = out.column("t")[rows & (out.subsequence_id == s)]
            assert 10 <= original.size <= 30
            np.testing.assert_array_equal(np.diff(original), 1.0)
            starts.append(original[0])
            stops.append(original[-1] + 1)
        order = np.argsort(starts)
        gaps = np.array(starts)[order][1:] - np.array(stops)[order][:-1]
        assert np.all((gaps >= 10) & (gaps <= 30))


def test_split_lengths_are_uniform():
    rng = np.random.default_rng(123)
    plan = SplitPlan()
    lengths = []
    while len(lengths) < 6000:
        windows = sample_windows(100000, plan, rng)
        lengths += [stop - start for start, stop in windows[:-1]]
    counts = np.bincount(np.array(lengths) - 10, minlength=21)
    assert counts.size == 21
    assert chisquare(counts).pvalue > 0.001


def test_short_sequence_is_kept_whole(caplog):
    t = sequence_table([9])
    with caplog.at_level("WARNING", logger="softbrier"):
        out = split_into_subsequences(t, SplitPlan())
    assert len(out) == 9
    assert np.unique(out.subsequence_id).size == 1
    assert "kept whole" in caplog.text


def test_split_is_seeded():
    t = sequence_table([400])
    a = split_into_subsequences(t, SplitPlan(seed=1))
    b = split_into_subsequences(t, SplitPlan(seed=1))
    np.testing.assert_array_equal(a.features, b.features)
    np.testing.assert_array_equal(a.subsequence_id, b.subsequence_id)
    bagged = [table for _, table in resplit_bagging(t, SplitPlan(), seeds=[1, 2])]
    np.testing.assert_array_equal(bagged[0].features, a.features)
    assert not np.array_equal(bagged[1].column("t"), a.column("t")) or len(bagged[1]) != len(a)


@pytest.mark.parametrize("ranges", [((0, 5), (10, 30)), ((30, 10), (10, 30)), ((10, 30), (10.5, 30))])
def test_split_plan_validation(ranges):
    with pytest.raises(ValidationError):
        SplitPlan(*ranges).validate()


def test_lag_lead_values_and_boundaries():
    t = sequence_table([5, 3]).with_columns(["x"], np.array([0, 1, 2, 3, 4, 10, 11, 12], dtype=np.float64))
    out = add_lag_lead(t, ["x"], orders=2)
    assert out.columns == ("t", "x", "lag1_x", "lag2_x", "lead1_x", "lead2_x")
    nan = np.nan
    np.testing.assert_array_equal(out.column("lag1_x"), [nan, 0, 1, 2, 3, nan, 10, 11])
    np.testing.assert_array_equal(out.column("lag2_x"), [nan, nan, 0, 1, 2, nan, nan, 10])
    np.testing.assert_array_equal(out.column("lead1_x"), [1, 2, 3, 4, nan, 11, 12, nan])
    np.testing.assert_array_equal(out.column("lead2_x"), [2, 3, 4, nan, nan, 12, nan, nan])


def test_lag_lead_column_count():
    t = sequence_table([30], columns=("a", "b", "c"))
    out = add_lag_lead(t, ["a", "b", "c"], orders=10)
    assert len(out.columns) == 3 + 20 * 3
    assert out.columns[3:6] == ("lag1_a", "lag1_b", "lag1_c")
    assert out.columns[33] == "lead1_a"


def test_lag_lead_rejects_unknown_column_and_bad_order():
    t = sequence_table([5])
    with pytest.raises(ValidationError):
        add_lag_lead(t, ["nope"], orders=1)
    with pytest.raises(ValidationError):
        add_lag_lead(t, ["t"], orders=[0])


def test_differences_inside_subsequences():
    t = sequence_table([4, 3]).with_columns(["x"], np.array([0, 1, 4, 9, 5, 5, 7], dtype=np.float64))
    out = add_differences(t, ["x"], order=2)
    nan = np.nan
    np.testing.assert_array_equal(out.column("diff1_x"), [nan, 1, 3, 5, nan, 0, 2])
    np.testing.assert_array_equal(out.column("diff2_x"), [nan, nan, 2, 2, nan, nan, 2])
    with pytest.raises(ValidationError):
        add_differences(t, ["x"], order=3)


def test_handedness_correction_is_idempotent():
    once, _ = correct_handedness(hand_table([2.0, 1.5, -1.0, -0.5, 3.0]))
    twice, flags = correct_handedness(once)
    assert not any(flags.values())
    np.testing.assert_array_equal(twice.features, once.features)


def test_half_hour_sequence_yields_about_forty_five_subsequences():
    t = sequence_table([1800])
    counts = [np.unique(split_into_subsequences(t, SplitPlan(seed=s)).subsequence_id).size for s in range(50)]
    assert 36 <= np.mean(counts) <= 54
