from dataclasses import dataclass, field
from typing import List

import numpy as np
from scipy.special import expit

from config import EM_CONFIG
from models.binary_models import logistic_objective
from src.core_data import PenaltyConfig
from src.nonparametric import BaselineHazard, StepSurvivalCurve, breslow_baseline, kaplan_meier
from src.optim import SmoothObjective, elastic_net_value, fista_minimize, kkt_violation
from util.errors import DataError, NumericalError
from util.logger import get_logger

logger = get_logger(__name__)

CMIX = "cmix"
CURE = "cure"


@dataclass
class CoxModel:
    beta: np.ndarray
    baseline: BaselineHazard
    penalty: PenaltyConfig
    converged: bool = True
    trace: List[float] = field(default_factory=list)

    kind = "cox"

    @property
    def coefficients(self) -> np.ndarray:
        return self.beta


@dataclass
class MixtureDurationModel:
    """
        Two exponential duration subgroups mixed by a logistic gate.
        `rate_high` belongs to the high-risk group, the one the gate's
        probability refers to. In cure mode the other group never has the event.
    """
    beta: np.ndarray
    intercept: float
    rate_high: float
    rate_low: float
    mode: str
    km_high: StepSurvivalCurve
    km_low: StepSurvivalCurve
    penalty: PenaltyConfig
    trace: List[float] = field(default_factory=list)
    n_iter: int = 0
    converged: bool = True

    @property
    def kind(self) -> str:
        return self.mode

    @property
    def coefficients(self) -> np.ndarray:
        return self.beta


class _DegenerateFit(Exception):
    pass


def _require_events(delta: np.ndarray):
    if not np.any(delta == 1):
        raise DataError("at least one observed event is needed to fit a survival model")


def cox_partial_likelihood(X: np.ndarray, y: np.ndarray, delta: np.ndarray) -> SmoothObjective:
    """Mean negative log partial likelihood, Breslow handling of tied times."""
    n, d = X.shape
    order = np.argsort(y, kind="mergesort")
    Xs, ys, events = X[order], y[order], delta[order] == 1
    first = np.searchsorted(ys, ys, side="left")

    def _risk(beta):
        eta = Xs @ beta
        top = eta.max()
        w = np.exp(eta - top)
        return eta, top, w, np.cumsum(w[::-1])[::-1][first]

    def value(beta):
        eta, top, _, risk_sums = _risk(beta)
        return float(-np.sum(eta[events] - top - np.log(risk_sums[events])) / n)

    def gradient(beta):
        _, _, w, risk_sums = _risk(beta)
        weighted = np.cumsum((w[:, None] * Xs)[::-1], axis=0)[::-1][first]
        risk_means = weighted[events] / risk_sums[events, None]
        return -np.sum(Xs[events] - risk_means, axis=0) / n

    return SmoothObjective(value, gradient, d)


def cox_fit(X: np.ndarray, y: np.ndarray, delta: np.ndarray, penalty: PenaltyConfig,
            tol: float = None, max_iter: int = None) -> CoxModel:
    X, y, delta = np.asarray(X, dtype=float), np.asarray(y, dtype=float), np.asarray(delta, dtype=int)
    _require_events(delta)
    objective = cox_partial_likelihood(X, y, delta)
    result = fista_minimize(objective, penalty, np.zeros(X.shape[1]), tol=tol, max_iter=max_iter)
    if not result.converged:
        raise NumericalError(f"Cox fit did not converge in {result.n_iter} iterations (gamma={penalty.gamma:g})",
                             result.trace)
    beta = result.x
    if not np.all(np.isfinite(np.exp(X @ beta))):
        raise NumericalError("Cox marker overflows on the training rows", result.trace)
    violation = kkt_violation(objective.gradient(beta), beta, penalty)
    logger.debug(f"Cox fit: {result.n_iter} iterations, {np.count_nonzero(beta)} active, KKT {violation:.2e}")
    return CoxModel(beta, breslow_baseline(y, delta, X, beta), penalty, True, result.trace)


def cox_marker(model: CoxModel, X: np.ndarray):
    return np.exp(np.asarray(X, dtype=float) @ model.beta)


def cox_survival(model: CoxModel, x: np.ndarray, t: float):
    """Breslow baseline survival raised to exp(x'beta); x may be one row or a matrix."""
    if t < 0:
        raise DataError("time must be non-negative")
    return model.baseline.survival_at(t) ** cox_marker(model, x)


def _log_gate(eta: np.ndarray):
    return -np.logaddexp(0.0, -eta), -np.logaddexp(0.0, eta)


def _log_duration(y: np.ndarray, delta: np.ndarray, rate: float) -> np.ndarray:
    """delta * log f(y) + (1 - delta) * log S(y) for an exponential duration."""
    log_rate = np.log(rate) if rate > 0 else -np.inf
    return np.where(delta == 1, log_rate, 0.0) - rate * y


def _joint_terms(X, y, delta, beta, intercept, rate_high, rate_low):
    log_pi, log_not_pi = _log_gate(X @ beta + intercept)
    a = log_pi + _log_duration(y, delta, rate_high)
    c = log_not_pi + _log_duration(y, delta, rate_low)
    return a, c


def mixture_objective(X, y, delta, beta, intercept, rate_high, rate_low, penalty: PenaltyConfig) -> float:
    """Penalized observed-data log-likelihood, per subject."""
    a, c = _joint_terms(X, y, delta, beta, intercept, rate_high, rate_low)
    return float(np.mean(np.logaddexp(a, c))) - elastic_net_value(beta, penalty)


def _responsibilities(X, y, delta, beta, intercept, rate_high, rate_low) -> np.ndarray:
    a, c = _joint_terms(X, y, delta, beta, intercept, rate_high, rate_low)
    return np.exp(a - np.logaddexp(a, c))


def mixture_posterior(model: MixtureDurationModel, X: np.ndarray, y: np.ndarray, delta: np.ndarray) -> np.ndarray:
    """Posterior probability of high-risk membership given covariates and observed duration."""
    return _responsibilities(np.asarray(X, dtype=float), np.asarray(y, dtype=float), np.asarray(delta, dtype=int),
                             model.beta, model.intercept, model.rate_high, model.rate_low)


def _initial_state(X, y, delta, mode, seed, attempt):
    d = X.shape[1]
    overall = delta.sum() / max(y.sum(), 1e-12)
    short = y <= np.median(y)

    def rate(mask):
        exposure = y[mask].sum()
        return delta[mask].sum() / exposure if exposure > 0 else 0.0

    rate_high = rate(short) or overall
    rate_low = 0.0 if mode == CURE else (rate(~short) or 0.5 * rate_high)
    if mode == CMIX and rate_low >= rate_high:
        rate_low = 0.5 * rate_high
    fraction = np.clip(short.mean(), 1e-3, 1 - 1e-3)
    beta = np.zeros(d)
    intercept = float(np.log(fraction / (1.0 - fraction)))

    if attempt > 0:
        rng = np.random.default_rng(seed + attempt)
        beta = rng.normal(0.0, 0.01, d)
        intercept += float(rng.normal())
        rate_high *= float(np.exp(rng.normal(0.0, 0.5)))
        if mode == CMIX:
            rate_low *= float(np.exp(rng.normal(0.0, 0.5)))
            if rate_low > rate_high:
                rate_high, rate_low = rate_low, rate_high
    return beta, intercept, rate_high, rate_low


def _run_em(X, y, delta, penalty, mode, seed, attempt, tol, max_iter):
    beta, intercept, rate_high, rate_low = _initial_state(X, y, delta, mode, seed, attempt)
    collapse = EM_CONFIG["collapse"]
    objective = mixture_objective(X, y, delta, beta, intercept, rate_high, rate_low, penalty)
    trace = [objective]
    converged = False
    iteration = 0

    while iteration < max_iter:
        iteration += 1
        q = _responsibilities(X, y, delta, beta, intercept, rate_high, rate_low)
        if np.all(q < collapse) or np.all(q > 1.0 - collapse):
            raise _DegenerateFit(f"responsibilities collapsed at EM iteration {iteration}")

        exposure_high = float(q @ y)
        if exposure_high <= 0:
            raise _DegenerateFit("no exposure left in the high-risk group")
        rate_high = float(q @ delta) / exposure_high
        if mode == CMIX:
            exposure_low = float((1.0 - q) @ y)
            if exposure_low <= 0:
                raise _DegenerateFit("no exposure left in the low-risk group")
            rate_low = max(float((1.0 - q) @ delta) / exposure_low, 1e-300)

        gate = logistic_objective(X, q)
        result = fista_minimize(gate, penalty, np.append(beta, intercept), max_iter=EM_CONFIG["inner_max_iter"])
        beta, intercept = result.x[:-1].copy(), float(result.x[-1])

        if mode == CMIX:
            if rate_high == rate_low:
                raise _DegenerateFit("subgroup rates coincide")
            if rate_high < rate_low:
                rate_high, rate_low = rate_low, rate_high
                beta, intercept = -beta, -intercept

        updated = mixture_objective(X, y, delta, beta, intercept, rate_high, rate_low, penalty)
        if not np.isfinite(updated):
            raise NumericalError(f"non-finite mixture likelihood at EM iteration {iteration}", trace)
        trace.append(updated)
        change = abs(updated - objective) / max(abs(objective), 1e-300)
        objective = updated
        if change < tol:
            converged = True
            break

    return beta, intercept, rate_high, rate_low, trace, iteration, converged


def _subgroup_curve(y, delta, mask, label) -> StepSurvivalCurve:
    if not mask.any():
        logger.warning(f"Empty {label} subgroup; using the whole training sample for its curve")
        return kaplan_meier(y, delta)
    return kaplan_meier(y[mask], delta[mask])


def cmix_fit(X: np.ndarray, y: np.ndarray, delta: np.ndarray, penalty: PenaltyConfig, mode: str = CMIX,
             seed: int = 0, tol: float = None, max_iter: int = None) -> MixtureDurationModel:
    """
        Generalized EM: closed-form exponential rates, then one penalized
        logistic solve of the gate against the responsibilities per iteration.
    """
    if mode not in (CMIX, CURE):
        raise DataError(f"unknown mixture mode '{mode}'")
    X, y, delta = np.asarray(X, dtype=float), np.asarray(y, dtype=float), np.asarray(delta, dtype=int)
    _require_events(delta)
    tol = EM_CONFIG["tol"] if tol is None else tol
    max_iter = EM_CONFIG["max_iter"] if max_iter is None else max_iter

    fitted = None
    for attempt in range(EM_CONFIG["max_restarts"] + 1):
        try:
            fitted = _run_em(X, y, delta, penalty, mode, seed, attempt, tol, max_iter)
            break
        except _DegenerateFit as e:
            logger.warning(f"{mode} EM attempt {attempt} degenerate: {e}")
    if fitted is None:
        raise NumericalError(f"{mode} EM degenerate after {EM_CONFIG['max_restarts']} restarts")

    beta, intercept, rate_high, rate_low, trace, n_iter, converged = fitted
    if not converged:
        logger.warning(f"{mode} EM stopped at max_iter={max_iter}")
    logger.debug(f"{mode} EM: {n_iter} iterations, rates {rate_high:.4g}/{rate_low:.4g}, "
                 f"{np.count_nonzero(beta)} active")

    gate = logistic_objective(X, _responsibilities(X, y, delta, beta, intercept, rate_high, rate_low))
    violation = kkt_violation(gate.gradient(np.append(beta, intercept)), np.append(beta, intercept),
                              penalty, gate.penalized)
    logger.debug(f"{mode} gate KKT residual {violation:.2e}")

    high = expit(X @ beta + intercept) > EM_CONFIG["cluster_threshold"]
    return MixtureDurationModel(
        beta=beta,
        intercept=intercept,
        rate_high=rate_high,
        rate_low=0.0 if mode == CURE else rate_low,
        mode=mode,
        km_high=_subgroup_curve(y, delta, high, "high-risk"),
        km_low=_subgroup_curve(y, delta, ~high, "low-risk"),
        penalty=penalty,
        trace=trace,
        n_iter=n_iter,
        converged=converged,
    )


def mixture_marker(model: MixtureDurationModel, x: np.ndarray):
    score = expit(np.asarray(x, dtype=float) @ model.beta + model.intercept)
    return float(score) if np.ndim(score) == 0 else score


def mixture_survival(model: MixtureDurationModel, x: np.ndarray, t: float):
    if t < 0:
        raise DataError("time must be non-negative")
    pi = mixture_marker(model, x)
    low = 1.0 if model.mode == CURE else model.km_low.at(t)
    return pi * model.km_high.at(t) + (1.0 - pi) * low


def survival_marker(model, X: np.ndarray) -> np.ndarray:
    """Risk marker used for the C-index: exp(x'beta) for Cox, the gate probability otherwise."""
    if isinstance(model, CoxModel):
        return np.atleast_1d(cox_marker(model, X))
    return np.atleast_1d(mixture_marker(model, X))


def predict_survival(model, X: np.ndarray, t: float) -> np.ndarray:
    if isinstance(model, CoxModel):
        return np.atleast_1d(cox_survival(model, X, t))
    return np.atleast_1d(mixture_survival(model, X, t))
