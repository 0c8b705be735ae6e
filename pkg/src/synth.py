from dataclasses import dataclass
from typing import Tuple

import numpy as np
import pandas as pd
from scipy.special import expit

from config import SYNTH_CONFIG
from src.core_data import BINARY, CONTINUOUS, Dataset
from util.errors import DataError, NumericalError
from util.logger import get_logger

logger = get_logger(__name__)

CALIBRATION_STEPS = 50
CALIBRATION_TOLERANCE = 0.05


@dataclass(frozen=True)
class SynthConfig:
    n: int = SYNTH_CONFIG["n"]
    d: int = SYNTH_CONFIG["d"]
    sparsity: int = SYNTH_CONFIG["sparsity"]
    rate_high: float = SYNTH_CONFIG["rate_high"]
    rate_low: float = SYNTH_CONFIG["rate_low"]
    censor_rate: float = SYNTH_CONFIG["censor_rate"]
    seed: int = SYNTH_CONFIG["seed"]
    n_binary: int = 0

    def __post_init__(self):
        if self.n < 2 or self.d < 1:
            raise DataError("need at least 2 subjects and 1 covariate")
        if not 0 <= self.sparsity <= self.d:
            raise DataError(f"sparsity must lie in [0, d], got {self.sparsity}")
        if not self.rate_high > self.rate_low > 0:
            raise DataError("rates must satisfy rate_high > rate_low > 0")
        if not 0 <= self.censor_rate < 1:
            raise DataError(f"censor_rate must lie in [0, 1), got {self.censor_rate}")
        if not 0 <= self.n_binary <= self.d - self.sparsity:
            raise DataError("binary covariates must be drawn among the inactive ones")


@dataclass(frozen=True, eq=False)
class SynthTruth:
    groups: np.ndarray
    beta: np.ndarray
    event_times: np.ndarray
    censor_times: np.ndarray
    rate_high: float
    rate_low: float

    def gate(self, X: np.ndarray) -> np.ndarray:
        return expit(np.asarray(X, dtype=float) @ self.beta)

    def survival(self, X: np.ndarray, t: float) -> np.ndarray:
        """Generating survival function, the mixture of the two exponential subgroups."""
        pi = self.gate(X)
        return pi * np.exp(-self.rate_high * t) + (1.0 - pi) * np.exp(-self.rate_low * t)


def true_coefficients(d: int, sparsity: int) -> np.ndarray:
    beta = np.zeros(d)
    beta[:sparsity] = [1.0 if k % 2 == 0 else -1.0 for k in range(sparsity)]
    return beta


def calibrate_censoring(event_times: np.ndarray, unit_draws: np.ndarray, target: float) -> np.ndarray:
    """
        Censoring times unit_draws / rate, with the rate found by bisection on
        the log scale so that the censored share matches `target`. The same
        unit draws are reused at every step.
    """
    if target == 0:
        return np.full(len(event_times), np.inf)
    low, high = np.log(1e-8 / event_times.mean()), np.log(1e8 / event_times.mean())
    best, best_gap = None, np.inf
    for _ in range(CALIBRATION_STEPS):
        middle = 0.5 * (low + high)
        censor = unit_draws / np.exp(middle)
        share = float(np.mean(censor < event_times))
        gap = abs(share - target)
        if gap < best_gap:
            best, best_gap = censor, gap
        if share < target:
            low = middle
        else:
            high = middle
    if best_gap > CALIBRATION_TOLERANCE:
        raise NumericalError(f"censoring calibration missed {target:.3f} by {best_gap:.3f}")
    return best


def synth_generate(config: SynthConfig = None) -> Tuple[Dataset, SynthTruth]:
    config = config or SynthConfig()
    rng = np.random.default_rng(config.seed)
    X = rng.standard_normal((config.n, config.d))
    beta = true_coefficients(config.d, config.sparsity)
    groups = (rng.random(config.n) < expit(X @ beta)).astype(int)
    rates = np.where(groups == 1, config.rate_high, config.rate_low)
    event_times = rng.exponential(1.0, config.n) / rates
    censor_times = calibrate_censoring(event_times, rng.exponential(1.0, config.n), config.censor_rate)

    kinds = [CONTINUOUS] * config.d
    for j in range(config.d - config.n_binary, config.d):
        X[:, j] = (X[:, j] > 0).astype(float)
        kinds[j] = BINARY

    y = np.minimum(event_times, censor_times)
    delta = (event_times <= censor_times).astype(int)
    data = Dataset(X, y, delta, tuple(f"x{j}" for j in range(config.d)), tuple(kinds),
                   tuple(f"S{i:05d}" for i in range(config.n)))
    logger.info(f"Generated {config.n} subjects, {groups.mean():.1%} high risk, {1 - delta.mean():.1%} censored")
    return data, SynthTruth(groups, beta, event_times, censor_times, config.rate_high, config.rate_low)


SERIES_CONCEPTS = {
    # concept: (baseline, per-hour drift for high-risk subjects, noise sd, share of subjects measured)
    "heart_rate": (80.0, 0.15, 4.0, 1.0),
    "temperature": (37.0, 0.01, 0.2, 0.95),
    "spo2": (97.0, -0.03, 1.0, 0.9),
    "lactate": (1.5, 0.02, 0.3, 0.3),
}


def synth_series(subject_ids, groups: np.ndarray, seed: int = 0, horizon_hours: float = 96.0,
                 mean_points: float = 12.0) -> pd.DataFrame:
    """Irregular long-format vitals ending at discharge (time 0), drifting for high-risk subjects."""
    rng = np.random.default_rng(seed)
    rows = []
    for subject, group in zip(subject_ids, groups):
        for concept, (baseline, drift, noise, share) in SERIES_CONCEPTS.items():
            if rng.random() >= share:
                continue
            count = max(1, int(rng.poisson(mean_points)))
            times = np.unique(np.round(-rng.uniform(0.0, horizon_hours, count), 2))
            values = baseline + group * drift * (times + horizon_hours) + rng.normal(0.0, noise, len(times))
            rows.extend({"subject_id": subject, "concept": concept, "time_hours": float(t), "value": float(v)}
                        for t, v in zip(times, values))
    return pd.DataFrame(rows, columns=["subject_id", "concept", "time_hours", "value"])
