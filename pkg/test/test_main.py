import json

import pandas as pd
import pytest

import main
from util.errors import NumericalError


@pytest.fixture
def cohort_dir(tmp_path):
    out = tmp_path / "cohort"
    assert main.main(["synth", "--out-dir", str(out), "--n", "80", "--d", "5", "--sparsity", "2",
                      "--binary", "1", "--series", "--seed", "4"]) == 0
    return out


def test_synth_writes_tables(cohort_dir):
    covariates = pd.read_csv(cohort_dir / "covariates.csv")
    assert len(covariates) == 80
    assert {"subject_id", "y", "delta"} <= set(covariates.columns)
    assert set(pd.read_csv(cohort_dir / "latent.csv")["group"]) <= {0, 1}
    assert (cohort_dir / "series.csv").exists()


def test_usage_errors_exit_one(tmp_path):
    assert main.main(["transmogrify"]) == 1
    assert main.main(["fit", "--data", "x.csv", "--model", "forest", "--out", "m.json"]) == 1
    assert main.main(["bench", "--config", str(tmp_path / "absent.json")]) == 1


def test_missing_data_exits_two(tmp_path):
    assert main.main(["fit", "--data", str(tmp_path / "absent.csv"), "--model", "cox",
                      "--out", str(tmp_path / "m.json")]) == 2


def test_numerical_failure_exits_three(cohort_dir, monkeypatch):
    def failing_cv(*args, **kwargs):
        raise NumericalError("[cox] solver did not converge", trace=[1.0, 0.9])

    monkeypatch.setattr(main, "kfold_cv", failing_cv)
    assert main.main(["cv", "--data", str(cohort_dir / "covariates.csv"), "--model", "cox"]) == 3


def test_fit_saves_named_coefficients(cohort_dir, tmp_path):
    out = tmp_path / "cox.json"
    assert main.main(["fit", "--data", str(cohort_dir / "covariates.csv"), "--model", "cox",
                      "--gamma", "0.05", "--out", str(out)]) == 0
    saved = json.loads(out.read_text())
    assert saved["mode"] == "cox"
    assert [c["name"] for c in saved["coefficients"]] == ["x0", "x1", "x2", "x3", "x4"]


def test_features_command(cohort_dir, tmp_path):
    series = pd.read_csv(cohort_dir / "series.csv")
    subset = series[series["subject_id"].isin(sorted(series["subject_id"].unique())[:6])]
    subset.to_csv(tmp_path / "series.csv", index=False)
    out = tmp_path / "features.csv"
    assert main.main(["features", "--series", str(tmp_path / "series.csv"), "--out", str(out),
                      "--threshold", "0.5"]) == 0
    table = pd.read_csv(out, index_col="subject_id")
    assert len(table) == 6
    assert any(column.startswith("heart_rate") for column in table.columns)


def test_bench_then_report(cohort_dir, tmp_path, capsys):
    config = tmp_path / "run.json"
    config.write_text(json.dumps({"data_path": str(cohort_dir / "covariates.csv"), "models": ["cox"],
                                  "gammas": {"cox": 0.05}, "output_dir": str(tmp_path / "runs")}))
    assert main.main(["bench", "--config", str(config)]) == 0
    run_dir = capsys.readouterr().out.strip().splitlines()[-1]

    assert main.main(["report", "--run-dir", run_dir, "--out", str(tmp_path / "tables")]) == 0
    assert (tmp_path / "tables" / "metrics.csv").exists()
    assert main.main(["report", "--run-dir", str(tmp_path / "nowhere")]) == 2


def test_malformed_duration_exits_two(tmp_path):
    path = tmp_path / "cohort.csv"
    pd.DataFrame({"y": ["soon", 4.0, 9.0], "delta": [1, 1, 0], "age": [30.0, 40.0, 52.0]}).to_csv(path, index=False)
    assert main.main(["fit", "--data", str(path), "--model", "cox", "--out", str(tmp_path / "m.json")]) == 2


def test_unreadable_series_exits_two(tmp_path):
    assert main.main(["features", "--series", str(tmp_path / "absent.csv"), "--out", str(tmp_path / "f.csv")]) == 2
