from dataclasses import dataclass, field
from typing import List, Optional, Sequence

import numpy as np
from scipy.special import expit

from src.core_data import PenaltyConfig, SurvivalRecord
from src.optim import SmoothObjective, fista_minimize, kkt_violation
from util.errors import DataError
from util.logger import get_logger

logger = get_logger(__name__)


@dataclass
class BinaryTask:
    epsilon: float
    labels: np.ndarray
    retained: np.ndarray
    excluded: np.ndarray

    @property
    def n_excluded(self) -> int:
        return len(self.excluded)


@dataclass
class FittedLinearModel:
    kind: str
    beta: np.ndarray
    intercept: float
    penalty: PenaltyConfig
    converged: bool = True
    trace: List[float] = field(default_factory=list)

    @property
    def coefficients(self) -> np.ndarray:
        return self.beta


def make_binary_labels(records: Sequence[SurvivalRecord], epsilon: float) -> BinaryTask:
    """
        Label 1 when the event is observed within the horizon, 0 when the
        subject is known to be event-free at the horizon. Subjects censored
        before the horizon carry no label and are excluded.
    """
    if not epsilon > 0:
        raise DataError(f"epsilon must be positive, got {epsilon}")
    y = np.array([r.y for r in records], dtype=float)
    delta = np.array([r.delta for r in records], dtype=int)
    return labels_from_arrays(y, delta, epsilon)


def labels_from_arrays(y: np.ndarray, delta: np.ndarray, epsilon: float) -> BinaryTask:
    if not epsilon > 0:
        raise DataError(f"epsilon must be positive, got {epsilon}")
    excluded_mask = (delta == 0) & (y <= epsilon)
    retained = np.flatnonzero(~excluded_mask)
    excluded = np.flatnonzero(excluded_mask)
    if len(retained) == 0:
        raise DataError(f"every subject is censored before epsilon={epsilon}")
    labels = ((delta[retained] == 1) & (y[retained] <= epsilon)).astype(int)
    logger.debug(f"Horizon {epsilon:g}: {len(retained)} retained ({labels.sum()} positive), {len(excluded)} excluded")
    return BinaryTask(epsilon, labels, retained, excluded)


def _check_binary(labels: np.ndarray):
    if not np.isin(labels, (0, 1)).all():
        raise DataError("labels must be 0 or 1")
    if len(np.unique(labels)) < 2:
        raise DataError("both classes must be present to fit a binary model")


def _sample_weights(labels: np.ndarray, class_weight: Optional[str]) -> np.ndarray:
    if class_weight is None:
        return np.ones(len(labels))
    if class_weight != "balanced":
        raise DataError(f"unknown class_weight '{class_weight}'")
    positives = labels.mean()
    return np.where(labels == 1, 0.5 / positives, 0.5 / (1.0 - positives))


def logistic_objective(X: np.ndarray, targets: np.ndarray, weights: Optional[np.ndarray] = None) -> SmoothObjective:
    """Mean weighted Bernoulli negative log-likelihood; targets may be soft, in [0, 1]."""
    n, d = X.shape
    weights = np.ones(n) if weights is None else np.asarray(weights, dtype=float)

    def value(w):
        eta = X @ w[:d] + w[d]
        return float(np.sum(weights * (np.logaddexp(0.0, eta) - targets * eta)) / n)

    def gradient(w):
        eta = X @ w[:d] + w[d]
        residual = weights * (expit(eta) - targets) / n
        return np.append(X.T @ residual, residual.sum())

    return SmoothObjective(value, gradient, d + 1, np.append(np.ones(d, dtype=bool), False))


def squared_hinge_objective(X: np.ndarray, labels: np.ndarray, weights: Optional[np.ndarray] = None) -> SmoothObjective:
    n, d = X.shape
    signs = 2.0 * labels - 1.0
    weights = np.ones(n) if weights is None else np.asarray(weights, dtype=float)

    def value(w):
        margin = np.maximum(1.0 - signs * (X @ w[:d] + w[d]), 0.0)
        return float(np.sum(weights * margin ** 2) / n)

    def gradient(w):
        margin = np.maximum(1.0 - signs * (X @ w[:d] + w[d]), 0.0)
        coef = -2.0 * weights * margin * signs / n
        return np.append(X.T @ coef, coef.sum())

    return SmoothObjective(value, gradient, d + 1, np.append(np.ones(d, dtype=bool), False))


def _fit_linear(kind: str, objective: SmoothObjective, penalty: PenaltyConfig, init: Optional[np.ndarray],
                tol: Optional[float], max_iter: Optional[int]) -> FittedLinearModel:
    start = np.zeros(objective.dimension) if init is None else np.asarray(init, dtype=float)
    result = fista_minimize(objective, penalty, start, tol=tol, max_iter=max_iter)
    if not result.converged:
        logger.warning(f"{kind} fit reached max_iter={result.n_iter} without converging (gamma={penalty.gamma:g})")
    violation = kkt_violation(objective.gradient(result.x), result.x, penalty, objective.penalized)
    logger.debug(f"{kind} fit: {result.n_iter} iterations, objective {result.trace[-1]:.8g}, KKT {violation:.2e}")
    d = objective.dimension - 1
    return FittedLinearModel(kind, result.x[:d].copy(), float(result.x[d]), penalty, result.converged, result.trace)


def logistic_fit(X: np.ndarray, labels: np.ndarray, penalty: PenaltyConfig, class_weight: Optional[str] = None,
                 init: Optional[np.ndarray] = None, tol: float = None, max_iter: int = None) -> FittedLinearModel:
    X = np.asarray(X, dtype=float)
    labels = np.asarray(labels, dtype=float)
    _check_binary(labels)
    objective = logistic_objective(X, labels, _sample_weights(labels, class_weight))
    return _fit_linear("logistic", objective, penalty, init, tol, max_iter)


def svm_fit(X: np.ndarray, labels: np.ndarray, penalty: PenaltyConfig, class_weight: Optional[str] = None,
            init: Optional[np.ndarray] = None, tol: float = None, max_iter: int = None) -> FittedLinearModel:
    X = np.asarray(X, dtype=float)
    labels = np.asarray(labels, dtype=float)
    _check_binary(labels)
    objective = squared_hinge_objective(X, labels, _sample_weights(labels, class_weight))
    return _fit_linear("svm", objective, penalty, init, tol, max_iter)


def predict_score(model: FittedLinearModel, x: np.ndarray):
    """Probability for logistic, decision value for svm. Accepts one row or a matrix."""
    x = np.asarray(x, dtype=float)
    if x.shape[-1] != len(model.beta):
        raise DataError(f"expected {len(model.beta)} covariates, got {x.shape[-1]}")
    decision = x @ model.beta + model.intercept
    score = expit(decision) if model.kind == "logistic" else decision
    return float(score) if np.ndim(score) == 0 else score
