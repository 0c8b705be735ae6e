import numpy as np
import pytest
from scipy.optimize import minimize_scalar
from scipy.special import expit

from conftest import central_difference
from models.survival_models import (CURE, MixtureDurationModel, cmix_fit, cox_fit, cox_marker,
                                    cox_partial_likelihood, cox_survival, mixture_marker, mixture_posterior,
                                    mixture_survival)
from src.core_data import PenaltyConfig
from src.evaluation import c_index
from src.nonparametric import StepSurvivalCurve
from src.optim import kkt_violation
from src.synth import SynthConfig, synth_generate
from util.errors import DataError


def _cox_data(rng, n=60, d=4):
    X = rng.standard_normal((n, d))
    times = rng.exponential(1.0, n) / np.exp(X @ np.array([0.8, -0.5, 0.0, 0.0]))
    censor = rng.exponential(2.0, n)
    y = np.maximum(np.round(np.minimum(times, censor), 1), 0.1)  # rounding creates ties
    return X, y, (times <= censor).astype(int)


def test_partial_likelihood_gradient(rng):
    X, y, delta = _cox_data(rng)
    objective = cox_partial_likelihood(X, y, delta)
    for _ in range(5):
        beta = rng.normal(0.0, 0.5, 4)
        analytic = objective.gradient(beta)
        numeric = central_difference(objective.value, beta)
        assert np.linalg.norm(analytic - numeric) <= 1e-5 * np.linalg.norm(analytic)


def test_single_covariate_matches_one_dimensional_search():
    x = np.array([[1.0], [0.0], [1.0], [0.0], [0.0], [1.0], [0.0], [1.0]])
    y = np.arange(1.0, 9.0)
    delta = np.array([1, 1, 1, 0, 1, 1, 1, 0])
    objective = cox_partial_likelihood(x, y, delta)
    oracle = minimize_scalar(lambda b: objective.value(np.array([b])), bounds=(-10.0, 10.0), method="bounded",
                             options={"xatol": 1e-10})
    model = cox_fit(x, y, delta, PenaltyConfig(0.0), tol=1e-14)
    assert model.beta[0] == pytest.approx(oracle.x, abs=1e-4)


def test_cox_huge_penalty_constant_marker(rng):
    X, y, delta = _cox_data(rng)
    model = cox_fit(X, y, delta, PenaltyConfig(1e4))
    assert np.all(model.beta == 0.0)
    assert np.all(cox_marker(model, X) == 1.0)


def test_cox_survival_properties(rng):
    X, y, delta = _cox_data(rng)
    model = cox_fit(X, y, delta, PenaltyConfig(0.01))
    x = X[0]
    assert cox_survival(model, x, 0.0) == pytest.approx(1.0)
    curve = [float(cox_survival(model, x, t)) for t in np.linspace(0.0, y.max(), 50)]
    assert np.all(np.diff(curve) <= 1e-15)
    assert cox_survival(model, np.zeros(4), 1.0) == pytest.approx(model.baseline.survival_at(1.0))
    with pytest.raises(DataError):
        cox_survival(model, x, -1.0)


def test_cox_fit_passes_kkt(rng):
    X, y, delta = _cox_data(rng, n=120, d=6)
    for penalty in (PenaltyConfig(0.02, 0.1), PenaltyConfig(0.1, 0.5)):
        model = cox_fit(X, y, delta, penalty)
        gradient = cox_partial_likelihood(X, y, delta).gradient(model.beta)
        assert kkt_violation(gradient, model.beta, penalty) < 1e-4


def test_cox_recentering_keeps_the_ranking(rng):
    X, y, delta = _cox_data(rng)
    plain = cox_fit(X, y, delta, PenaltyConfig(0.01))
    shifted = cox_fit(X + 3.0, y, delta, PenaltyConfig(0.01))
    np.testing.assert_allclose(plain.beta, shifted.beta, atol=1e-4)


def test_cox_needs_an_event():
    with pytest.raises(DataError):
        cox_fit(np.zeros((3, 1)), np.array([1.0, 2.0, 3.0]), np.zeros(3, dtype=int), PenaltyConfig(0.1))


@pytest.fixture(scope="module")
def mixture_cohort():
    return synth_generate(SynthConfig(seed=11))


@pytest.fixture(scope="module")
def mixture_fit(mixture_cohort):
    data, _ = mixture_cohort
    return cmix_fit(data.X, data.y, data.delta, PenaltyConfig(0.03), seed=0)


def test_em_trace_never_decreases(mixture_fit):
    trace = np.asarray(mixture_fit.trace)
    assert len(trace) >= 2
    assert np.all(np.diff(trace) >= -1e-8 * np.maximum(1.0, np.abs(trace[:-1])))


def test_em_trace_on_twenty_seeds():
    for seed in range(20):
        data, _ = synth_generate(SynthConfig(n=150, d=8, sparsity=3, seed=100 + seed))
        trace = np.asarray(cmix_fit(data.X, data.y, data.delta, PenaltyConfig(0.02), seed=seed).trace)
        assert np.all(np.diff(trace) >= -1e-8 * np.maximum(1.0, np.abs(trace[:-1])))


def test_cmix_recovers_latent_groups(mixture_cohort, mixture_fit):
    data, truth = mixture_cohort
    assert mixture_fit.rate_high > mixture_fit.rate_low > 0
    posterior = mixture_posterior(mixture_fit, data.X, data.y, data.delta)
    assert np.mean((posterior > 0.5) == (truth.groups == 1)) >= 0.85


def test_cmix_marker_ranks_latent_times(mixture_cohort, mixture_fit):
    data, truth = mixture_cohort
    marker = mixture_marker(mixture_fit, data.X)
    assert c_index(truth.event_times, np.ones(data.n, dtype=int), marker) > 0.6


def test_cure_mode_pins_the_low_rate():
    rng = np.random.default_rng(5)
    n = 300
    X = rng.standard_normal((n, 5))
    uncured = rng.random(n) < expit(X @ np.array([1.5, -1.5, 0.0, 0.0, 0.0]))
    times = np.where(uncured, rng.exponential(5.0, n), np.inf)
    censor = rng.uniform(20.0, 60.0, n)
    y = np.minimum(times, censor)
    delta = (times <= censor).astype(int)

    model = cmix_fit(X, y, delta, PenaltyConfig(0.01), mode=CURE)
    assert model.rate_low == 0.0
    assert model.mode == "cure"
    assert np.corrcoef(mixture_marker(model, X), uncured.astype(float))[0, 1] > 0.3
    assert mixture_survival(model, X[0], 1e4) >= 1.0 - mixture_marker(model, X[0]) - 1e-12


def _cured_cohort(seed, n=300):
    rng = np.random.default_rng(seed)
    X = rng.standard_normal((n, 5))
    uncured = rng.random(n) < expit(X @ np.array([1.5, -1.5, 0.0, 0.0, 0.0]))
    times = np.where(uncured, rng.exponential(2.0, n), np.inf)
    censor = rng.uniform(60.0, 100.0, n)
    return X, np.minimum(times, censor), (times <= censor).astype(int), uncured


def test_cure_matches_cmix_when_the_low_rate_vanishes():
    X, y, delta, _ = _cured_cohort(8)
    penalty = PenaltyConfig(0.01)
    cmix = cmix_fit(X, y, delta, penalty, tol=1e-14, max_iter=5000)
    cure = cmix_fit(X, y, delta, penalty, mode=CURE, tol=1e-14, max_iter=5000)
    assert cmix.rate_low < 1e-6
    assert cmix.rate_high == pytest.approx(cure.rate_high, rel=1e-3)
    assert np.max(np.abs(mixture_marker(cmix, X) - mixture_marker(cure, X))) < 1e-3


def test_cmix_huge_penalty_constant_gate(small_cohort):
    data, _ = small_cohort
    model = cmix_fit(data.X, data.y, data.delta, PenaltyConfig(1e4))
    assert np.all(model.beta == 0.0)


def test_mixture_input_checks(small_cohort):
    data, _ = small_cohort
    with pytest.raises(DataError):
        cmix_fit(data.X, data.y, np.zeros(data.n, dtype=int), PenaltyConfig(0.1))
    with pytest.raises(DataError):
        cmix_fit(data.X, data.y, data.delta, PenaltyConfig(0.1), mode="weibull")


def _hand_model(beta, intercept):
    high = StepSurvivalCurve([1.0, 2.0], [0.5, 0.2])
    low = StepSurvivalCurve([3.0], [0.9])
    return MixtureDurationModel(np.asarray(beta, dtype=float), intercept, 0.5, 0.1, "cmix", high, low,
                                PenaltyConfig(0.1))


def test_mixture_marker_and_survival_by_hand():
    model = _hand_model([1.0, 0.0], 0.0)
    assert mixture_marker(model, np.zeros(2)) == 0.5
    assert mixture_marker(model, np.array([1.0, 0.0])) > mixture_marker(model, np.array([0.5, 0.0]))
    assert mixture_survival(model, np.zeros(2), 0.0) == 1.0
    for t in (0.5, 1.5, 2.5, 4.0):
        value = mixture_survival(model, np.array([0.3, 0.0]), t)
        bounds = sorted([model.km_high.at(t), model.km_low.at(t)])
        assert bounds[0] - 1e-12 <= value <= bounds[1] + 1e-12

    certain = _hand_model([0.0, 0.0], 50.0)
    assert mixture_survival(certain, np.zeros(2), 1.5) == pytest.approx(0.5)
