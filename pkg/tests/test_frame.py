import numpy as np
import pytest

from src.data import (ClassWeights, FrameTable, ScoreMatrix, SoftLabelMatrix, class_weights_from_frequency,
                      concat_tables, harden_labels, read_frame_csv, validate_table, write_frame_csv)
from src.errors import ValidationError


def make_table(keys, n_classes=2, labels=None, room=None):
    keys = np.asarray(keys)
    features = np.arange(len(keys) * 2, dtype=np.float64).reshape(len(keys), 2)
    if labels is None:
        labels = np.tile(np.eye(n_classes)[0], (len(keys), 1))
    return FrameTable(participant_id=keys[:, 0], subsequence_id=keys[:, 1], second_index=keys[:, 2],
                      features=features, columns=("a", "b"), n_classes=n_classes, room=room, soft_labels=labels)


def test_harden_labels_takes_argmax_and_lowest_index_on_ties():
    Y = np.array([[0.0, 1.0, 0.0], [0.7, 0.1, 0.2], [0.5, 0.5, 0.0], [0.2, 0.4, 0.4]])
    np.testing.assert_array_equal(harden_labels(Y), [1, 0, 0, 1])


def test_soft_label_matrix_rejects_rows_not_summing_to_one():
    with pytest.raises(ValidationError):
        SoftLabelMatrix(np.array([[0.5, 0.4]]))
    with pytest.raises(ValidationError):
        SoftLabelMatrix(np.array([[1.5, -0.5]]))


def test_one_hot_range_is_checked():
    with pytest.raises(ValidationError):
        SoftLabelMatrix.one_hot([0, 3], 3)


def test_class_weights_must_be_positive():
    with pytest.raises(ValidationError):
        ClassWeights(np.array([1.0, 0.0]))


def test_score_matrix_probability_kind_is_validated():
    with pytest.raises(ValidationError):
        ScoreMatrix(np.array([[0.3, 0.3]]), kind="probability")
    ScoreMatrix(np.array([[5.0, -3.0]]), kind="raw")


def test_frequency_weights_balanced_labels_are_uniform():
    Y = SoftLabelMatrix.one_hot([0, 0, 1, 1], 2)
    np.testing.assert_allclose(class_weights_from_frequency(Y).weights, [1.0, 1.0])


def test_frequency_weights_are_inverse_frequency_rescaled():
    Y = SoftLabelMatrix.one_hot([0, 0, 0, 1], 2)
    w = class_weights_from_frequency(Y).weights
    # frequencies 3/4 and 1/4 -> 4/3 and 4, rescaled to sum 2
    np.testing.assert_allclose(w, [0.5, 1.5])
    assert w.sum() == pytest.approx(2.0)


def test_frequency_weights_fall_back_for_absent_classes(caplog):
    Y = SoftLabelMatrix.one_hot([0, 0, 1], 3)
    with caplog.at_level("WARNING", logger="softbrier"):
        w = class_weights_from_frequency(Y).weights
    # 1/(2/3) = 1.5, 1/(1/3) = 3, absent class takes 3; then scaled to sum 3
    np.testing.assert_allclose(w, np.array([1.5, 3.0, 3.0]) * 3 / 7.5)
    assert "zero label mass" in caplog.text


def test_frequency_weights_do_not_depend_on_row_order(rng):
    Y = rng.dirichlet(np.ones(4), size=50)
    perm = rng.permutation(50)
    np.testing.assert_allclose(class_weights_from_frequency(Y).weights,
                               class_weights_from_frequency(Y[perm]).weights, rtol=1e-12)


def test_validate_table_accepts_well_formed_table():
    t = make_table([(1, 0, 0), (1, 0, 1), (1, 1, 0), (2, 0, 0)])
    assert validate_table(t) == []


def test_validate_table_reports_bad_label_row():
    labels = np.array([[1.0, 0.0], [0.5, 0.4], [0.0, 1.0]])
    t = make_table([(1, 0, 0), (1, 0, 1), (1, 0, 2)], labels=labels)
    violations = validate_table(t)
    assert len(violations) == 1
    assert violations[0].startswith("row 1: normalization")


def test_validate_table_reports_duplicated_key():
    t = make_table([(1, 0, 0), (1, 0, 1), (1, 0, 1)])
    violations = validate_table(t)
    assert len(violations) == 1
    assert "uniqueness" in violations[0]


def test_validate_table_reports_gap_in_seconds():
    t = make_table([(1, 0, 0), (1, 0, 2)])
    violations = validate_table(t)
    assert len(violations) == 1
    assert "consecutive" in violations[0]


def test_sort_keys_and_groups():
    t = make_table([(2, 0, 1), (1, 1, 0), (2, 0, 0), (1, 0, 0)]).sort_keys()
    np.testing.assert_array_equal(t.participant_id, [1, 1, 2, 2])
    np.testing.assert_array_equal(t.subsequence_id, [0, 1, 0, 0])
    np.testing.assert_array_equal(t.second_index, [0, 0, 0, 1])
    np.testing.assert_array_equal(t.groups(), [0, 1, 2, 2])


def test_with_columns_rejects_name_clash():
    t = make_table([(1, 0, 0)])
    with pytest.raises(ValidationError):
        t.with_columns(["a"], np.zeros((1, 1)))
    assert t.with_columns(["c"], np.ones((1, 1))).columns == ("a", "b", "c")


def test_row_view_maps_nan_to_none():
    t = make_table([(1, 0, 0)])
    t = t.replace(features=np.array([[np.nan, 2.0]]), room=np.array([-1]))
    row = t.row(0)
    assert row.features == (None, 2.0)
    assert row.room is None
    assert row.soft_label == (1.0, 0.0)


def test_concat_tables_keeps_room_only_when_all_have_it():
    a = make_table([(1, 0, 0)], room=np.array([2]))
    b = make_table([(2, 0, 0)])
    both = concat_tables([a, b])
    assert len(both) == 2
    assert both.room is None
    np.testing.assert_array_equal(both.participant_id, [1, 2])
    assert concat_tables([a, a.replace(participant_id=[3])]).room.tolist() == [2, 2]


def test_concat_tables_requires_same_columns():
    a = make_table([(1, 0, 0)])
    with pytest.raises(ValidationError):
        concat_tables([a, a.select_columns(["b"])])


def test_frame_csv_keeps_missing_cells_and_room(tmp_path):
    t = make_table([(1, 0, 0), (1, 0, 1)], room=np.array([0, -1]))
    t = t.replace(features=np.array([[np.nan, 1.25], [3.0, -2.0]]))
    path = tmp_path / "table.csv"
    write_frame_csv(t, path)
    back = read_frame_csv(path)
    assert back.columns == ("a", "b")
    assert np.isnan(back.features[0, 0])
    np.testing.assert_array_equal(back.features[1], [3.0, -2.0])
    np.testing.assert_array_equal(back.room, [0, -1])
    np.testing.assert_array_equal(back.soft_labels, t.soft_labels)
