import json

import numpy as np
import pytest

from src.orchestrator import BenchmarkOrchestrator, run_benchmark
from src.run_config import RunConfig, load_run_config
from src.synth import SynthConfig, synth_generate
from util.errors import DataError, UsageError


def _write_cohort(tmp_path, n=150, censor_all=False):
    data, _ = synth_generate(SynthConfig(n=n, d=6, sparsity=2, n_binary=2, seed=3))
    frame = data.to_frame()
    if censor_all:
        frame["delta"] = 0
    path = tmp_path / "cohort.csv"
    frame.to_csv(path, index=False, float_format="%.10g")
    return path


def _write_config(tmp_path, name, **values):
    path = tmp_path / name
    path.write_text(json.dumps(values, sort_keys=True))
    return path


def test_invalid_config_is_a_usage_error(tmp_path):
    with pytest.raises(UsageError):
        load_run_config(str(_write_config(tmp_path, "bad.json", data_path="x.csv", models=["forest"])))
    with pytest.raises(UsageError):
        load_run_config(str(tmp_path / "absent.json"))


def test_reference_gammas():
    config = RunConfig(data_path="unused.csv", gammas="reference")
    assert config.fixed_gamma("cure") == 0.008
    assert RunConfig(data_path="unused.csv", gammas={"cox": 0.1}).fixed_gamma("cmix") is None


def test_full_run_is_deterministic(tmp_path):
    cohort = _write_cohort(tmp_path)
    config = _write_config(tmp_path, "run.json", data_path=str(cohort), gammas="reference", epsilon=5.0,
                           output_dir=str(tmp_path / "runs"))
    report, directory = run_benchmark(str(config))
    snapshot = {p.name: p.read_bytes() for p in sorted((tmp_path / "runs").glob("*/*"))}
    _, again = run_benchmark(str(config))
    assert again == directory

    assert len(report.metrics) == 8
    assert sorted(report.metrics["metric"].value_counts().items()) == [("auc", 5), ("c_index", 3)]
    assert set(report.importance.index) == {"logistic", "svm", "cox", "cure", "cmix"}
    assert set(report.curves["model"]) == {"cure", "cmix"}
    assert {"p_cmix", "p_epsilon", "p_logrank"} <= set(report.tests.columns)
    assert ((report.metrics["score"] >= 0) & (report.metrics["score"] <= 1)).all()

    assert {"report.json", "run_metadata.json", "metrics.csv", "tests.csv", "curves.csv"} <= set(snapshot)
    for path in sorted((tmp_path / "runs").glob("*/*")):
        assert path.read_bytes() == snapshot[path.name]


def test_stored_run_is_reused(tmp_path):
    cohort = _write_cohort(tmp_path, n=100)
    config = _write_config(tmp_path, "run.json", data_path=str(cohort), models=["cox"], gammas={"cox": 0.05},
                           output_dir=str(tmp_path / "runs"))
    report, directory = run_benchmark(str(config))
    again, same_directory = run_benchmark(str(config), reuse=True)
    assert same_directory == directory
    assert again.metric("cox", "c_index") == pytest.approx(report.metric("cox", "c_index"))


def test_failures_are_tagged_with_the_model(tmp_path):
    cohort = _write_cohort(tmp_path, n=60, censor_all=True)
    config = _write_config(tmp_path, "run.json", data_path=str(cohort), models=["cox"], gammas={"cox": 0.05},
                           output_dir=str(tmp_path / "runs"))
    with pytest.raises(DataError, match=r"\[cox\]"):
        run_benchmark(str(config))


def test_mixture_bridge_competes_with_direct_logistic():
    cmix_auc, logistic_auc, cmix_concordance = [], [], []
    for seed in range(10):
        data, _ = synth_generate(SynthConfig(seed=seed))
        epsilon = float(np.quantile(data.y, 0.25))
        config = RunConfig(data_path="unused.csv", models=["logistic", "cmix"], gammas={"cmix": 0.03},
                           epsilon=epsilon, seed=seed, gamma_grid={"low": 1e-3, "high": 1.0, "num": 6}, cv_folds=3)
        report = BenchmarkOrchestrator(config).run_on(data)
        cmix_auc.append(report.metric("cmix", "auc"))
        logistic_auc.append(report.metric("logistic", "auc"))
        cmix_concordance.append(report.metric("cmix", "c_index"))
    assert np.median(cmix_auc) > 0.65
    assert np.median(cmix_auc) >= np.median(logistic_auc) + 0.05
    assert np.median(cmix_concordance) > 0.6
