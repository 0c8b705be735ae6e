import numpy as np
import pandas as pd
import pytest

from src.core_data import (BINARY, CONTINUOUS, Dataset, PenaltyConfig, SurvivalRecord, constant_columns,
                           drop_columns, fit_standardizer, impute_missing, infer_kinds, load_dataset,
                           split_indices, standardize, train_test_split)
from util.errors import DataError


def test_penalty_split():
    penalty = PenaltyConfig(gamma=2.0, eta=0.25)
    assert penalty.l1 == pytest.approx(1.5)
    assert penalty.l2 == pytest.approx(0.5)


@pytest.mark.parametrize("gamma, eta", [(-1.0, 0.1), (1.0, 0.0), (1.0, 1.0)])
def test_penalty_rejects_bad_values(gamma, eta):
    with pytest.raises(DataError):
        PenaltyConfig(gamma, eta)


def test_record_validation():
    with pytest.raises(DataError):
        SurvivalRecord(-1.0, 1, np.zeros(2))
    with pytest.raises(DataError):
        SurvivalRecord(1.0, 2, np.zeros(2))
    record = SurvivalRecord(3.0, 0, np.array([1.0, 2.0]))
    with pytest.raises(ValueError):
        record.x[0] = 5.0


def test_impute_median_and_mode():
    raw = pd.DataFrame({
        "y": [1.0, 2.0, 3.0, 4.0],
        "delta": [1, 0, 1, 1],
        "a": [1.0, np.nan, 3.0, 10.0],
        "b": [1.0, 0.0, np.nan, 0.0],
    })
    data = impute_missing(raw, {"a": CONTINUOUS, "b": BINARY})
    assert data.X[1, 0] == 3.0
    assert data.X[2, 1] == 0.0
    assert not np.isnan(data.X).any()


def test_mode_ties_go_to_smaller_value():
    raw = pd.DataFrame({"y": [1.0, 2.0, 3.0], "delta": [1, 1, 0], "b": [1.0, 0.0, np.nan]})
    data = impute_missing(raw, {"b": BINARY})
    assert data.X[2, 0] == 0.0


def test_all_missing_column_is_rejected():
    raw = pd.DataFrame({"y": [1.0, 2.0], "delta": [1, 0], "a": [np.nan, np.nan]})
    with pytest.raises(DataError, match="has no observed values"):
        impute_missing(raw, {"a": CONTINUOUS})


def test_infer_kinds():
    frame = pd.DataFrame({"y": [1, 2, 3], "delta": [1, 0, 1], "flag": [0, 1, np.nan], "count": [0, 1, 2]})
    assert infer_kinds(frame) == {"flag": BINARY, "count": CONTINUOUS}
    assert infer_kinds(frame, {"flag": CONTINUOUS})["flag"] == CONTINUOUS


def test_binary_column_outside_zero_one():
    with pytest.raises(DataError):
        Dataset(np.array([[0.0], [2.0]]), [1.0, 2.0], [1, 0], ("b",), (BINARY,))


def test_split_is_a_seeded_partition():
    train, test = split_indices(10, 0.3, seed=4)
    assert len(test) == 3 and len(train) == 7
    assert sorted(np.concatenate([train, test]).tolist()) == list(range(10))
    again_train, again_test = split_indices(10, 0.3, seed=4)
    assert np.array_equal(train, again_train) and np.array_equal(test, again_test)


def test_split_refuses_an_empty_side():
    with pytest.raises(DataError):
        split_indices(1, 0.3, seed=0)


def test_standardize_uses_training_moments(rng):
    X = np.column_stack([rng.normal(5.0, 2.0, 30), (rng.random(30) > 0.5).astype(float)])
    data = Dataset(X, rng.exponential(10.0, 30), np.ones(30, dtype=int), ("age", "sex"), (CONTINUOUS, BINARY))
    train, test = train_test_split(data, 0.3, seed=0)
    params = fit_standardizer(train)
    scaled = standardize(train, params)
    assert params.columns == ("age",)
    assert np.mean(scaled.X[:, 0]) == pytest.approx(0.0, abs=1e-12)
    assert np.std(scaled.X[:, 0], ddof=1) == pytest.approx(1.0)
    assert np.array_equal(scaled.X[:, 1], train.X[:, 1])
    np.testing.assert_allclose(standardize(test, params).X[:, 0], (test.X[:, 0] - params.means[0]) / params.sds[0])


def test_zero_variance_column_is_rejected():
    data = Dataset(np.ones((4, 1)), [1.0, 2.0, 3.0, 4.0], [1, 1, 0, 1], ("c",), (CONTINUOUS,))
    with pytest.raises(DataError, match="zero variance"):
        fit_standardizer(data)
    assert constant_columns(data) == ["c"]


def test_drop_columns_keeps_order():
    data = Dataset(np.arange(6.0).reshape(2, 3), [1.0, 2.0], [1, 0], ("a", "b", "c"), (CONTINUOUS,) * 3)
    reduced = drop_columns(data, ["b"])
    assert reduced.names == ("a", "c")
    assert np.array_equal(reduced.X, [[0.0, 2.0], [3.0, 5.0]])


def test_load_dataset_samples_one_stay_and_merges_features(tmp_path):
    path = tmp_path / "stays.csv"
    pd.DataFrame({
        "subject_id": ["a", "a", "b", "c", "c", "c"],
        "y": [5.0, 7.0, 3.0, 20.0, 40.0, 9.0],
        "delta": [1, 0, 1, 0, 1, 1],
        "age": [30.0, 31.0, 50.0, 62.0, 63.0, 64.0],
    }).to_csv(path, index=False)
    features = pd.DataFrame({"hr__last": [70.0, 90.0]}, index=pd.Index(["a", "c"], name="subject_id"))

    data = load_dataset(str(path), one_per_subject=True, seed=3, extra_features=features)
    assert sorted(data.subject_ids) == ["a", "b", "c"]
    assert data.names == ("age", "hr__last")
    row_b = data.subject_ids.index("b")
    assert data.X[row_b, 1] == 80.0


def test_load_dataset_unreadable_file(tmp_path):
    with pytest.raises(DataError):
        load_dataset(str(tmp_path / "missing.csv"))


@pytest.mark.parametrize("column, cells, match", [
    ("delta", [0.5, 1, 0], "event indicator"),
    ("delta", [2, 1, 0], "event indicator"),
    ("y", ["soon", 4.0, 9.0], "'y'"),
    ("age", ["old", 40.0, 52.0], "'age'"),
])
def test_load_dataset_rejects_malformed_cells(tmp_path, column, cells, match):
    table = {"y": [3.0, 4.0, 9.0], "delta": [1, 1, 0], "age": [30.0, 40.0, 52.0]}
    table[column] = cells
    path = tmp_path / "cohort.csv"
    pd.DataFrame(table).to_csv(path, index=False)
    with pytest.raises(DataError, match=match):
        load_dataset(str(path))


def test_fractional_indicator_is_not_truncated():
    with pytest.raises(DataError, match="event indicator"):
        Dataset(np.zeros((2, 1)), [1.0, 2.0], [0.5, 1.0], ("x",), (CONTINUOUS,))
