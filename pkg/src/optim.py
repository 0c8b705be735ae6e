from dataclasses import dataclass, field
from typing import Callable, List, Optional

import numpy as np

from config import SOLVER_CONFIG
from src.core_data import PenaltyConfig
from util.errors import NumericalError
from util.logger import get_logger

logger = get_logger(__name__)


@dataclass
class SmoothObjective:
    """
        Smooth part of a penalized fit. `penalized` marks the coordinates the
        Elastic-Net term applies to; the intercept, when present, is left out.
    """
    value: Callable[[np.ndarray], float]
    gradient: Callable[[np.ndarray], np.ndarray]
    dimension: int
    penalized: Optional[np.ndarray] = None

    def __post_init__(self):
        if self.penalized is None:
            self.penalized = np.ones(self.dimension, dtype=bool)
        self.penalized = np.asarray(self.penalized, dtype=bool)
        if self.penalized.shape != (self.dimension,):
            raise ValueError("penalized mask does not match the dimension")


@dataclass
class SolverResult:
    x: np.ndarray
    trace: List[float] = field(default_factory=list)
    n_iter: int = 0
    converged: bool = False


def soft_threshold(z, t):
    if np.any(np.asarray(t) < 0):
        raise ValueError("threshold must be non-negative")
    return np.sign(z) * np.maximum(np.abs(z) - t, 0.0)


def elastic_net_value(x: np.ndarray, penalty: PenaltyConfig, penalized: Optional[np.ndarray] = None) -> float:
    beta = x if penalized is None else x[penalized]
    return penalty.l1 * float(np.sum(np.abs(beta))) + 0.5 * penalty.l2 * float(beta @ beta)


def prox_elastic_net(v: np.ndarray, step: float, penalty: PenaltyConfig,
                     penalized: Optional[np.ndarray] = None) -> np.ndarray:
    if not step > 0:
        raise ValueError("step must be positive")
    v = np.asarray(v, dtype=float)
    shrunk = soft_threshold(v, step * penalty.l1) / (1.0 + step * penalty.l2)
    if penalized is None:
        return shrunk
    return np.where(penalized, shrunk, v)


def kkt_violation(gradient: np.ndarray, x: np.ndarray, penalty: PenaltyConfig,
                  penalized: Optional[np.ndarray] = None) -> float:
    """Largest violation of the Elastic-Net optimality conditions at x."""
    if penalized is None:
        penalized = np.ones_like(x, dtype=bool)
    residual = np.abs(gradient).astype(float)
    active = penalized & (x != 0)
    residual[active] = np.abs(gradient[active] + penalty.l2 * x[active] + penalty.l1 * np.sign(x[active]))
    inactive = penalized & (x == 0)
    residual[inactive] = np.maximum(np.abs(gradient[inactive]) - penalty.l1, 0.0)
    return float(residual.max()) if residual.size else 0.0


def _check_finite(value, iterate: int, what: str):
    if not np.all(np.isfinite(value)):
        raise NumericalError(f"non-finite {what} at iterate {iterate}")


def estimate_lipschitz(f: SmoothObjective, x: np.ndarray, n_iter: Optional[int] = None) -> float:
    """Power iteration on finite-difference Hessian-vector products."""
    n_iter = n_iter or SOLVER_CONFIG["power_iterations"]
    g0 = f.gradient(x)
    h = 1e-6 * max(1.0, float(np.linalg.norm(x)))
    v = np.ones(f.dimension) / np.sqrt(f.dimension)
    estimate = 0.0
    for _ in range(n_iter):
        hv = (f.gradient(x + h * v) - g0) / h
        norm = float(np.linalg.norm(hv))
        if not np.isfinite(norm) or norm == 0.0:
            break
        estimate = norm
        v = hv / norm
    return estimate if estimate > 0 else 1.0


def fista_minimize(
    f: SmoothObjective,
    penalty: PenaltyConfig,
    init: np.ndarray,
    tol: Optional[float] = None,
    max_iter: Optional[int] = None,
    grad_tol: Optional[float] = None,
) -> SolverResult:
    """
        Accelerated proximal gradient with backtracking. Momentum restarts
        whenever a step would raise the penalized objective, so the recorded
        trace never increases. Stops once the relative objective change falls
        below `tol` and the gradient mapping is below `grad_tol`.
    """
    tol = SOLVER_CONFIG["tol"] if tol is None else tol
    max_iter = SOLVER_CONFIG["max_iter"] if max_iter is None else max_iter
    grad_tol = SOLVER_CONFIG["grad_tol"] if grad_tol is None else grad_tol
    shrink = SOLVER_CONFIG["backtrack"]
    mask = f.penalized

    def penalized_value(point, smooth):
        return smooth + elastic_net_value(point, penalty, mask)

    x = np.array(init, dtype=float)
    f_x = f.value(x)
    _check_finite(f_x, 0, "objective")
    F_x = penalized_value(x, f_x)
    trace = [F_x]

    step = 1.0 / estimate_lipschitz(f, x)
    y = x.copy()
    t = 1.0
    just_restarted = False
    converged = False
    iterate = 0

    while iterate < max_iter:
        iterate += 1
        f_y = f.value(y)
        g_y = f.gradient(y)
        _check_finite(f_y, iterate, "objective")
        _check_finite(g_y, iterate, "gradient")

        while True:
            z = prox_elastic_net(y - step * g_y, step, penalty, mask)
            diff = z - y
            f_z = f.value(z)
            bound = f_y + float(g_y @ diff) + float(diff @ diff) / (2.0 * step)
            if np.isfinite(f_z) and f_z <= bound + 1e-12 * abs(f_y):
                break
            step *= shrink
            if step < 1e-30:
                raise NumericalError(f"line search failed at iterate {iterate}", trace)

        F_z = penalized_value(z, f_z)
        if F_z > F_x:
            if just_restarted:
                converged = True
                break
            y = x.copy()
            t = 1.0
            just_restarted = True
            continue
        just_restarted = False

        grad_map = float(np.max(np.abs(diff))) / step if diff.size else 0.0
        relative = (F_x - F_z) / max(abs(F_x), 1e-300)
        t_next = 0.5 * (1.0 + np.sqrt(1.0 + 4.0 * t * t))
        y = z + ((t - 1.0) / t_next) * (z - x)
        x, F_x, t = z, F_z, t_next
        trace.append(F_x)

        if relative < tol and grad_map < grad_tol:
            converged = True
            break

    if not converged:
        logger.debug(f"FISTA stopped at max_iter={max_iter}, objective {F_x:.10g}")
    return SolverResult(x=x, trace=trace, n_iter=iterate, converged=converged)
