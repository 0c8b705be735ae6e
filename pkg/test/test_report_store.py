import numpy as np
import pandas as pd
import pytest

from src.report import ComparisonReport
from src.run_store import RunStore, compute_run_id
from util.errors import DataError


def _report():
    importance = pd.DataFrame([[0.5, 0.0], [0.2, 0.1]], index=pd.Index(["cox", "cmix"], name="model"),
                              columns=["age", "hr__last"])
    similarity = pd.DataFrame([[1.0, np.nan], [np.nan, 1.0]], index=importance.index, columns=importance.index)
    return ComparisonReport(
        metrics=pd.DataFrame({"setting": ["survival", "binary"], "model": ["cox", "cox"],
                              "metric": ["c_index", "auc"], "via": ["marker", "bridge"], "score": [0.71, 0.64]}),
        importance=importance,
        similarity=similarity,
        tests=pd.DataFrame({"covariate": ["age"], "kind": ["continuous"], "degenerate": [False],
                            "p_cmix": [0.01], "p_cmix_corrected": [0.02]}),
        group_summaries=pd.DataFrame({"scheme": ["cmix"], "group": [1], "covariate": ["age"], "median": [61.0]}),
        curves=pd.DataFrame({"model": ["cmix"], "group": ["high"], "time": [2.0], "survival": [0.8],
                             "lower95": [0.6], "upper95": [0.9]}),
        chosen_gammas={"cox": 0.014},
        summary={"seed": 0, "epsilon": 30.0},
    )


def test_report_round_trip_keeps_tables():
    report = _report()
    restored = ComparisonReport.from_dict(report.to_dict())
    assert restored.metric("cox", "c_index") == 0.71
    assert np.isnan(restored.similarity.loc["cox", "cmix"])
    assert restored.importance.loc["cmix", "hr__last"] == 0.1
    assert restored.chosen_gammas == {"cox": 0.014}


def test_missing_values_become_null():
    assert '"NaN"' not in _report().to_json() and "NaN" not in _report().to_json()


def test_written_files_are_byte_identical(tmp_path):
    first = _report().write(str(tmp_path / "one"))
    second = _report().write(str(tmp_path / "two"))
    assert [p.split("/")[-1] for p in first] == [p.split("/")[-1] for p in second]
    for a, b in zip(first, second):
        with open(a, "rb") as fa, open(b, "rb") as fb:
            assert fa.read() == fb.read()
    assert (tmp_path / "one" / "importance.csv").read_text().startswith("model,age,hr__last")


def test_run_store(tmp_path):
    store = RunStore(str(tmp_path / "runs"))
    run_id = compute_run_id(b'{"seed": 0}', b"y,delta\n1,1\n")
    assert run_id == compute_run_id(b'{"seed": 0}', b"y,delta\n1,1\n")
    assert run_id != compute_run_id(b'{"seed": 1}', b"y,delta\n1,1\n")
    assert store.find_run(run_id) is None

    directory = store.store_run(run_id, _report(), ["cox", "cmix"])
    assert store.find_run(run_id) == directory
    assert (tmp_path / "runs" / run_id / "run_metadata.json").exists()
    assert RunStore.retrieve_run(directory).metric("cox", "auc") == 0.64


def test_retrieve_missing_run(tmp_path):
    with pytest.raises(DataError):
        RunStore.retrieve_run(str(tmp_path))
