import math

import numpy as np
import pytest

from conftest import make_mask
from panel_cf.panel import (
    AllMissingUnit,
    DegeneratePanel,
    DuplicateCell,
    NonPositiveValue,
    PanelMatrix,
    RaggedRow,
    TreatmentMask,
    drop_units,
    drop_zero_variance_pre,
    impute_locf_nocb,
    load_panel,
    log_transform,
    panel_to_csv,
    read_panel,
    save_panel,
    split,
)


def test_load_rectangular(fixtures_dir):
    panel = read_panel(fixtures_dir / "did_toy.csv")
    assert panel.unit_ids == ("a", "b")
    assert panel.time_labels == (0, 1)
    np.testing.assert_array_equal(panel.values, [[1.0, 2.0], [1.0, 3.0]])


def test_load_long_format_pivots(fixtures_dir):
    panel = read_panel(fixtures_dir / "panel_long.csv", layout="long_format")
    np.testing.assert_array_equal(panel.values, [[1.0, 2.0], [3.0, 4.0]])
    assert panel.unit_ids == ("a", "b")


def test_duplicate_cell_rejected():
    raw = b"unit,time,value\na,1,1.0\na,1,2.0\nb,1,3.0\nb,2,4.0\n"
    with pytest.raises(DuplicateCell):
        load_panel(raw, layout="long_format")


def test_ragged_row_rejected():
    with pytest.raises(RaggedRow, match="baris 3"):
        load_panel(b"unit,1,2,3\na,1,2,3\nb,1,2\n")
    with pytest.raises(RaggedRow, match="baris 4"):
        load_panel(b"# config_hash=x seed=1\nunit,1,2\na,1,2\nb,1,2,3\n")


def test_non_numeric_cell_rejected():
    with pytest.raises(ValueError, match="bukan angka"):
        load_panel(b"unit,1,2\na,1,dua\nb,3,4\n")


def test_long_text_labels_keep_file_order():
    rows = "".join(f"{u},t{k},{k + (10 if u == 'b' else 0)}\n" for u in "ab" for k in range(1, 11))
    panel = load_panel(("unit,time,value\n" + rows).encode(), layout="long_format")
    assert panel.time_labels == tuple(f"t{k}" for k in range(1, 11))
    np.testing.assert_array_equal(panel.values[0], np.arange(1.0, 11.0))
    np.testing.assert_array_equal(panel.values[1], np.arange(11.0, 21.0))


def test_long_text_labels_merge_across_units():
    raw = b"unit,time,value\na,jan,1\na,mar,3\nb,feb,2\nb,mar,4\n"
    panel = load_panel(raw, layout="long_format")
    assert panel.time_labels == ("jan", "feb", "mar")
    assert np.isnan(panel.values[0, 1]) and np.isnan(panel.values[1, 0])


def test_long_text_labels_contradicting_order():
    raw = b"unit,time,value\na,x,1\na,y,2\nb,y,3\nb,x,4\n"
    with pytest.raises(ValueError, match="bertentangan"):
        load_panel(raw, layout="long_format")


def test_long_integer_labels_sort_numerically():
    raw = b"unit,time,value\na,10,3\na,2,1\na,9,2\nb,2,4\nb,9,5\nb,10,6\n"
    panel = load_panel(raw, layout="long_format")
    assert panel.time_labels == (2, 9, 10)
    np.testing.assert_array_equal(panel.values, [[1, 2, 3], [4, 5, 6]])


def test_rectangular_text_header_keeps_column_order():
    panel = load_panel(b"unit,q1,q2,q10\na,1,2,3\nb,4,5,6\n")
    assert panel.time_labels == ("q1", "q2", "q10")
    assert panel.time_index("q10") == 2


def test_duplicate_text_labels_rejected():
    with pytest.raises(ValueError, match="duplikat"):
        load_panel(b"unit,q1,q1\na,1,2\nb,3,4\n")


def test_missing_tokens_and_comment_header(fixtures_dir):
    panel = read_panel(fixtures_dir / "panel_missing.csv")
    assert panel.n_units == 3 and panel.n_periods == 4
    assert int(np.isnan(panel.values).sum()) == 4
    assert not panel.is_complete


def test_round_trip_is_bit_exact(tmp_path):
    rng = np.random.default_rng(3)
    panel = PanelMatrix(rng.normal(size=(4, 5)) * 1e3, ("w", "x", "y", "z"), tuple(range(5)))
    out = save_panel(panel, tmp_path / "p.csv", header="# config_hash=x seed=1\n")
    back = read_panel(out)
    assert back.values.tobytes() == panel.values.tobytes()
    assert back.unit_ids == panel.unit_ids


def test_panel_to_csv_marks_missing_as_na():
    panel = PanelMatrix(np.array([[1.0, np.nan], [2.0, 3.0]]), ("a", "b"), (1, 2))
    assert "NA" in panel_to_csv(panel)


def test_impute_examples():
    panel = PanelMatrix(
        np.array([[1.0, np.nan, np.nan], [np.nan, 2.0, np.nan]]), ("a", "b"), (0, 1, 2)
    )
    filled = impute_locf_nocb(panel, boundary=3)
    np.testing.assert_array_equal(filled.values, [[1, 1, 1], [2, 2, 2]])


def test_impute_segments_are_separate():
    panel = PanelMatrix(
        np.array([[1.0, np.nan, np.nan, 4.0], [1.0, 2.0, 3.0, 4.0]]), ("a", "b"), (0, 1, 2, 3)
    )
    filled = impute_locf_nocb(panel, boundary=2)
    # sel t=2 diisi dari sisi post (NOCB 4), bukan dari pre (LOCF 1)
    np.testing.assert_array_equal(filled.values[0], [1, 1, 4, 4])


def test_impute_is_idempotent(fixtures_dir):
    panel = read_panel(fixtures_dir / "panel_missing.csv")
    once = impute_locf_nocb(panel, boundary=2)
    twice = impute_locf_nocb(once, boundary=2)
    assert once.is_complete
    np.testing.assert_array_equal(once.values, twice.values)


def test_impute_all_missing_unit():
    panel = PanelMatrix(np.array([[np.nan, np.nan], [1.0, 2.0]]), ("a", "b"), (0, 1))
    with pytest.raises(AllMissingUnit):
        impute_locf_nocb(panel, boundary=1)


def test_log_transform():
    panel = PanelMatrix(np.array([[1.0, math.e], [math.e**2, math.e**3]]), ("a", "b"), (0, 1))
    np.testing.assert_allclose(log_transform(panel).values, [[0, 1], [2, 3]], rtol=1e-12)


def test_log_transform_inverts_exp(random_panel):
    back = log_transform(random_panel.with_values(np.exp(random_panel.values)))
    np.testing.assert_allclose(back.values, random_panel.values, rtol=1e-12)


def test_log_transform_rejects_zero():
    panel = PanelMatrix(np.array([[1.0, 0.0], [1.0, 2.0]]), ("a", "b"), (0, 1))
    with pytest.raises(NonPositiveValue):
        log_transform(panel)


def test_drop_zero_variance_pre():
    values = np.array([[5.0, 5.0, 5.0, 9.0], [1.0, 2.0, 3.0, 4.0], [2.0, 1.0, 3.0, 0.0]])
    panel = PanelMatrix(values, ("flat", "up", "mix"), (0, 1, 2, 3))
    kept, dropped = drop_zero_variance_pre(panel, make_mask(3, [1], 3))
    assert dropped == ["flat"]
    assert kept.unit_ids == ("up", "mix")


def test_drop_zero_variance_all_constant():
    panel = PanelMatrix(np.ones((3, 4)), ("a", "b", "c"), (0, 1, 2, 3))
    with pytest.raises(DegeneratePanel):
        drop_zero_variance_pre(panel, make_mask(3, [0], 2))


def test_drop_units_removes_rows(random_panel):
    out = drop_units(random_panel, ["u0", "u3"])
    assert out.unit_ids == ("u1", "u2", "u4", "u5")
    np.testing.assert_array_equal(out.values[0], random_panel.values[1])


def test_split_shapes_and_partition():
    values = np.arange(12, dtype=float).reshape(3, 4)
    panel = PanelMatrix(values, ("a", "b", "c"), (0, 1, 2, 3))
    view = split(panel, make_mask(3, [1], 2))
    assert view.x_train.shape == (2, 2) and view.y_train.shape == (2, 2)
    assert view.x_test.shape == (1, 2) and view.y_test.shape == (1, 2)
    rebuilt = np.empty_like(values)
    rebuilt[[0, 2]] = np.hstack([view.x_train, view.y_train])
    rebuilt[[1]] = np.hstack([view.x_test, view.y_test])
    np.testing.assert_array_equal(rebuilt, values)
    assert view.treated_ids == ("b",)
    assert view.post_labels == (2, 3)


def test_split_single_pre_period():
    panel = PanelMatrix(np.ones((2, 3)), ("a", "b"), (0, 1, 2))
    view = split(panel, make_mask(2, [0], 1))
    assert view.x_train.shape == (1, 1)


def test_mask_invariants():
    with pytest.raises(ValueError):
        TreatmentMask(np.array([True, True]), 1)
    with pytest.raises(ValueError):
        TreatmentMask(np.array([True, False]), 0)
    panel = PanelMatrix(np.ones((2, 3)), ("a", "b"), (0, 1, 2))
    with pytest.raises(ValueError):
        TreatmentMask(np.array([True, False]), 3).validate(panel)


def test_mask_expand_and_observed():
    mask = make_mask(3, [2], 2)
    w = mask.expand(4)
    assert w.sum() == 2 and w[2, 2] and w[2, 3]
    np.testing.assert_array_equal(mask.observed(4), ~w)


def test_mask_from_ids(fixtures_dir):
    panel = read_panel(fixtures_dir / "panel_small.csv")
    mask = TreatmentMask.from_ids(panel, ["t1"], panel.time_index(2004))
    assert mask.t0 == 4
    assert list(mask.treated_index) == [4]


def test_panel_rejects_decreasing_labels():
    with pytest.raises(ValueError):
        PanelMatrix(np.ones((2, 2)), ("a", "b"), (2, 1))
