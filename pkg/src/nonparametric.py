from dataclasses import dataclass
from typing import Optional, Tuple

import numpy as np
import pandas as pd
from scipy.stats import chi2, norm

from util.logger import get_logger

logger = get_logger(__name__)


def _frozen(values) -> np.ndarray:
    array = np.array(values, dtype=float, copy=True)
    array.setflags(write=False)
    return array


@dataclass(frozen=True, eq=False)
class StepSurvivalCurve:
    """Right-continuous step function; equals 1 before the first time."""
    times: np.ndarray
    survival: np.ndarray
    lower95: Optional[np.ndarray] = None
    upper95: Optional[np.ndarray] = None

    def __post_init__(self):
        object.__setattr__(self, "times", _frozen(self.times))
        object.__setattr__(self, "survival", _frozen(self.survival))
        if self.lower95 is not None:
            object.__setattr__(self, "lower95", _frozen(self.lower95))
            object.__setattr__(self, "upper95", _frozen(self.upper95))
        if np.any(np.diff(self.survival) > 1e-15):
            raise ValueError("survival curve must be non-increasing")

    def at(self, t):
        idx = np.searchsorted(self.times, np.asarray(t, dtype=float), side="right")
        out = np.concatenate(([1.0], self.survival))[idx]
        return float(out) if np.ndim(out) == 0 else out

    def to_frame(self) -> pd.DataFrame:
        frame = pd.DataFrame({"time": self.times, "survival": self.survival})
        if self.lower95 is not None:
            frame["lower95"] = self.lower95
            frame["upper95"] = self.upper95
        return frame


@dataclass(frozen=True, eq=False)
class BaselineHazard:
    times: np.ndarray
    cumulative: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "times", _frozen(self.times))
        object.__setattr__(self, "cumulative", _frozen(self.cumulative))

    def cumulative_at(self, t):
        t_arr = np.asarray(t, dtype=float)
        idx = np.searchsorted(self.times, t_arr, side="right") - 1
        padded = np.concatenate(([0.0], self.cumulative))
        out = padded[idx + 1]
        return float(out) if np.ndim(out) == 0 else out

    def survival_at(self, t):
        return np.exp(-np.asarray(self.cumulative_at(t)))


def _event_table(y: np.ndarray, delta: np.ndarray) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Distinct event times, events at each, and subjects at risk (y >= t)."""
    y = np.asarray(y, dtype=float)
    delta = np.asarray(delta, dtype=int)
    event_times = np.unique(y[delta == 1])
    events = np.array([np.sum((y == t) & (delta == 1)) for t in event_times], dtype=float)
    y_sorted = np.sort(y)
    at_risk = (len(y) - np.searchsorted(y_sorted, event_times, side="left")).astype(float)
    return event_times, events, at_risk


def kaplan_meier(y, delta, z: float = norm.ppf(0.975)) -> StepSurvivalCurve:
    """Product-limit estimate with Greenwood bands on the log(-log) scale."""
    y = np.asarray(y, dtype=float)
    delta = np.asarray(delta, dtype=int)
    if len(y) == 0:
        raise ValueError("kaplan_meier needs at least one record")
    times, d, n = _event_table(y, delta)
    if len(times) == 0:
        return StepSurvivalCurve(times, np.ones(0), np.ones(0), np.ones(0))

    factors = 1.0 - d / n
    survival = np.cumprod(factors)
    with np.errstate(divide="ignore", invalid="ignore"):
        greenwood = np.cumsum(np.where(n > d, d / (n * (n - d)), np.inf))
        log_s = np.log(survival)
        se = np.sqrt(greenwood) / np.abs(log_s)
        lower = survival ** np.exp(z * se)
        upper = survival ** np.exp(-z * se)
    positive = (survival > 0) & (survival < 1) & np.isfinite(se)
    lower = np.where(positive, lower, survival)
    upper = np.where(positive, upper, survival)
    return StepSurvivalCurve(times, survival, np.clip(lower, 0, 1), np.clip(upper, 0, 1))


def breslow_baseline(y, delta, X: np.ndarray, beta: np.ndarray) -> BaselineHazard:
    y = np.asarray(y, dtype=float)
    delta = np.asarray(delta, dtype=int)
    if len(y) == 0:
        raise ValueError("breslow_baseline needs at least one record")
    risk = np.exp(np.asarray(X, dtype=float) @ np.asarray(beta, dtype=float))
    times, d, _ = _event_table(y, delta)
    if len(times) == 0:
        return BaselineHazard(np.zeros(0), np.zeros(0))

    order = np.argsort(y, kind="mergesort")
    y_sorted = y[order]
    tail_sums = np.cumsum(risk[order][::-1])[::-1]
    denominators = tail_sums[np.searchsorted(y_sorted, times, side="left")]
    return BaselineHazard(times, np.cumsum(d / denominators))


def logrank_test(y_a, delta_a, y_b, delta_b) -> Tuple[float, float]:
    y_a, y_b = np.asarray(y_a, dtype=float), np.asarray(y_b, dtype=float)
    delta_a, delta_b = np.asarray(delta_a, dtype=int), np.asarray(delta_b, dtype=int)
    if len(y_a) == 0 or len(y_b) == 0:
        raise ValueError("logrank_test needs two nonempty groups")

    pooled_y = np.concatenate([y_a, y_b])
    pooled_delta = np.concatenate([delta_a, delta_b])
    times = np.unique(pooled_y[pooled_delta == 1])
    if len(times) == 0:
        return 0.0, 1.0

    sorted_a, sorted_b = np.sort(y_a), np.sort(y_b)
    n_a = (len(y_a) - np.searchsorted(sorted_a, times, side="left")).astype(float)
    n_b = (len(y_b) - np.searchsorted(sorted_b, times, side="left")).astype(float)
    event_a = np.sort(y_a[delta_a == 1])
    event_b = np.sort(y_b[delta_b == 1])
    d_a = (np.searchsorted(event_a, times, side="right") - np.searchsorted(event_a, times, side="left")).astype(float)
    d_b = (np.searchsorted(event_b, times, side="right") - np.searchsorted(event_b, times, side="left")).astype(float)

    n = n_a + n_b
    d = d_a + d_b
    expected_a = n_a * d / n
    with np.errstate(divide="ignore", invalid="ignore"):
        variance = np.where(n > 1, n_a * n_b * d * (n - d) / (n * n * (n - 1)), 0.0)
    total_variance = float(np.sum(variance))
    if total_variance <= 0:
        return 0.0, 1.0
    statistic = float(np.sum(d_a - expected_a)) ** 2 / total_variance
    return statistic, float(chi2.sf(statistic, 1))
