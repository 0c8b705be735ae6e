import hashlib
from dataclasses import dataclass
from typing import Dict, List, Mapping, Optional, Tuple

import numpy as np
import pandas as pd
from joblib import Parallel, delayed
from scipy.linalg import LinAlgError, cho_factor, cho_solve
from scipy.optimize import minimize

from config import LONGITUDINAL_CONFIG
from util.errors import DataError
from util.logger import get_logger

logger = get_logger(__name__)

LOG_2PI = float(np.log(2.0 * np.pi))


@dataclass(frozen=True, eq=False)
class LongitudinalSeries:
    """Measurements of one concept for one subject; hours relative to discharge."""
    times: np.ndarray
    values: np.ndarray

    def __post_init__(self):
        times = np.array(self.times, dtype=float, copy=True)
        values = np.array(self.values, dtype=float, copy=True)
        if times.ndim != 1 or times.shape != values.shape:
            raise DataError("times and values must be 1-D arrays of equal length")
        if len(times) == 0:
            raise DataError("a series needs at least one point")
        if np.any(np.diff(times) <= 0):
            raise DataError("series times must be strictly increasing")
        times.setflags(write=False)
        values.setflags(write=False)
        object.__setattr__(self, "times", times)
        object.__setattr__(self, "values", values)

    def window(self, window_hours: float, end: float = 0.0) -> Tuple[np.ndarray, np.ndarray]:
        mask = self.times >= end - window_hours
        return self.times[mask], self.values[mask]


@dataclass(frozen=True)
class GPHyperParams:
    const_var: float
    rbf_var: float
    rbf_len: float
    noise_var: float
    mean_slope: float
    mean_intercept: float
    log_marginal_likelihood: float = float("nan")


def ols_line(times: np.ndarray, values: np.ndarray) -> Tuple[float, float]:
    """(slope, intercept); slope is nan below 2 distinct timestamps."""
    if len(np.unique(times)) < 2:
        return float("nan"), float(np.mean(values)) if len(values) else float("nan")
    centered = times - times.mean()
    slope = float(centered @ (values - values.mean()) / (centered @ centered))
    return slope, float(values.mean() - slope * times.mean())


def window_mean_slope(series: LongitudinalSeries, window_hours: float = None) -> Tuple[float, float]:
    window_hours = LONGITUDINAL_CONFIG["window_hours"] if window_hours is None else window_hours
    if not window_hours > 0:
        raise DataError("window_hours must be positive")
    times, values = series.window(window_hours)
    if len(times) == 0:
        return float("nan"), float("nan")
    slope, _ = ols_line(times, values)
    return float(np.mean(values)), slope


def last_value(series: Optional[LongitudinalSeries]) -> float:
    if series is None:
        return float("nan")
    return float(series.values[-1])


def coverage_filter(all_series: Mapping[str, Mapping[str, LongitudinalSeries]], threshold: float = None) -> List[str]:
    """Concepts measured for a strictly larger share of subjects than `threshold`."""
    threshold = LONGITUDINAL_CONFIG["coverage_threshold"] if threshold is None else threshold
    if not 0 < threshold < 1:
        raise DataError(f"threshold must lie in (0, 1), got {threshold}")
    n_subjects = len(all_series)
    if n_subjects == 0:
        return []
    counts: Dict[str, int] = {}
    for concepts in all_series.values():
        for concept, series in concepts.items():
            if series is not None and len(series.times) > 0:
                counts[concept] = counts.get(concept, 0) + 1
    return sorted(c for c, k in counts.items() if k / n_subjects > threshold)


def gp_covariance(theta: np.ndarray, times: np.ndarray, jitter: float = None) -> np.ndarray:
    """Constant + RBF + white kernel; theta holds the log of the four parameters."""
    jitter = LONGITUDINAL_CONFIG["gp_jitter"] if jitter is None else jitter
    const_var, rbf_var, rbf_len, noise_var = np.exp(theta)
    sq_dist = (times[:, None] - times[None, :]) ** 2
    K = const_var + rbf_var * np.exp(-sq_dist / (2.0 * rbf_len ** 2))
    K[np.diag_indices_from(K)] += noise_var + jitter
    return K


def gp_log_marginal_likelihood(theta: np.ndarray, times: np.ndarray, residuals: np.ndarray) -> float:
    """-inf when the covariance is not numerically positive definite."""
    K = gp_covariance(np.asarray(theta, dtype=float), times)
    try:
        factor = cho_factor(K, lower=True)
    except (LinAlgError, ValueError):
        return float("-inf")
    alpha = cho_solve(factor, residuals)
    log_det = 2.0 * float(np.sum(np.log(np.diag(factor[0]))))
    value = -0.5 * float(residuals @ alpha) - 0.5 * log_det - 0.5 * len(times) * LOG_2PI
    return value if np.isfinite(value) else float("-inf")


def derive_seed(run_seed: int, subject_id: str, concept: str) -> int:
    digest = hashlib.md5(f"{run_seed}:{subject_id}:{concept}".encode()).hexdigest()
    return int(digest[:8], 16)


def draw_gp_starts(seed: int, n_starts: int = None) -> np.ndarray:
    """Log-uniform starts, one row of log-parameters per start."""
    n_starts = LONGITUDINAL_CONFIG["gp_starts"] if n_starts is None else n_starts
    rng = np.random.default_rng(seed)
    var_lo, var_hi = np.log(LONGITUDINAL_CONFIG["variance_start"])
    len_lo, len_hi = np.log(LONGITUDINAL_CONFIG["length_start"])
    starts = rng.uniform(var_lo, var_hi, size=(n_starts, 4))
    starts[:, 2] = rng.uniform(len_lo, len_hi, size=n_starts)
    return starts


def _search_bounds() -> List[Tuple[float, float]]:
    var_bounds = tuple(np.log(LONGITUDINAL_CONFIG["variance_bounds"]))
    len_bounds = tuple(np.log(LONGITUDINAL_CONFIG["length_bounds"]))
    return [var_bounds, var_bounds, len_bounds, var_bounds]


def gp_fit(series: LongitudinalSeries, window_hours: float = None, seed: int = 0,
           n_starts: int = None) -> Optional[GPHyperParams]:
    """
        Staged fit: the linear mean is set by OLS, then the kernel
        hyper-parameters maximize the log marginal likelihood of the residuals
        by bounded Nelder-Mead from several starts. Returns None when the
        window holds fewer than 3 distinct timestamps or every start fails.
    """
    window_hours = LONGITUDINAL_CONFIG["window_hours"] if window_hours is None else window_hours
    times, values = series.window(window_hours)
    if len(np.unique(times)) < LONGITUDINAL_CONFIG["gp_min_points"]:
        return None

    slope, intercept = ols_line(times, values)
    residuals = values - (slope * times + intercept)

    def objective(theta):
        value = gp_log_marginal_likelihood(theta, times, residuals)
        return -value if np.isfinite(value) else np.inf

    best_theta, best_value = None, -np.inf
    bounds = _search_bounds()
    for start in draw_gp_starts(seed, n_starts):
        start = np.clip(start, [b[0] for b in bounds], [b[1] for b in bounds])
        if not np.isfinite(objective(start)):
            continue
        result = minimize(objective, start, method="Nelder-Mead", bounds=bounds,
                          options={"maxfev": LONGITUDINAL_CONFIG["gp_max_eval"], "xatol": 1e-6, "fatol": 1e-10})
        if np.isfinite(result.fun) and -result.fun > best_value:
            best_theta, best_value = np.asarray(result.x), -float(result.fun)

    if best_theta is None:
        logger.debug("All GP starts failed; features left missing")
        return None
    const_var, rbf_var, rbf_len, noise_var = np.exp(best_theta)
    return GPHyperParams(float(const_var), float(rbf_var), float(rbf_len), float(noise_var),
                         slope, intercept, best_value)


def series_from_long_frame(frame: pd.DataFrame) -> Dict[str, Dict[str, LongitudinalSeries]]:
    """Long-format table (subject_id, concept, time_hours, value) to nested series."""
    required = {"subject_id", "concept", "time_hours", "value"}
    missing = required - set(frame.columns)
    if missing:
        raise DataError(f"series table lacks columns {sorted(missing)}")
    frame = frame.dropna(subset=["time_hours", "value"]).copy()
    frame["subject_id"] = frame["subject_id"].astype(str)
    # repeated timestamps are averaged so that times stay strictly increasing
    grouped = frame.groupby(["subject_id", "concept", "time_hours"], sort=True)["value"].mean().reset_index()
    nested: Dict[str, Dict[str, LongitudinalSeries]] = {}
    for (subject, concept), rows in grouped.groupby(["subject_id", "concept"], sort=True):
        nested.setdefault(subject, {})[concept] = LongitudinalSeries(
            rows["time_hours"].to_numpy(), rows["value"].to_numpy())
    return nested


def _feature_names(concept: str, window_hours: float) -> List[str]:
    w = f"{window_hours:g}"
    return [f"{concept}__mean{w}", f"{concept}__slope{w}", f"{concept}__last",
            f"{concept}__gp_constvar", f"{concept}__gp_rbfvar", f"{concept}__gp_rbflen",
            f"{concept}__gp_noisevar", f"{concept}__gp_meanslope"]


def _subject_concept_features(series: Optional[LongitudinalSeries], window_hours: float, seed: int) -> List[float]:
    if series is None:
        return [float("nan")] * 8
    mean, slope = window_mean_slope(series, window_hours)
    gp = gp_fit(series, window_hours, seed)
    gp_values = ([gp.const_var, gp.rbf_var, gp.rbf_len, gp.noise_var, gp.mean_slope]
                 if gp is not None else [float("nan")] * 5)
    return [mean, slope, last_value(series)] + gp_values


def extract_features(series_frame: pd.DataFrame, window_hours: float = None, threshold: float = None,
                     seed: int = 0, n_jobs: int = 1) -> pd.DataFrame:
    """Wide feature table, one row per subject indexed by subject_id; missing cells stay NaN."""
    window_hours = LONGITUDINAL_CONFIG["window_hours"] if window_hours is None else window_hours
    nested = series_from_long_frame(series_frame)
    concepts = coverage_filter(nested, threshold)
    subjects = sorted(nested)
    logger.info(f"Extracting features for {len(subjects)} subjects, {len(concepts)} retained concepts")

    cells = [(s, c) for s in subjects for c in concepts]
    values = Parallel(n_jobs=n_jobs)(
        delayed(_subject_concept_features)(nested[s].get(c), window_hours, derive_seed(seed, s, c))
        for s, c in cells
    )

    columns = [name for c in concepts for name in _feature_names(c, window_hours)]
    table = np.full((len(subjects), len(columns)), np.nan)
    for k, (s, c) in enumerate(cells):
        i = k // max(len(concepts), 1)
        j = concepts.index(c) * 8
        table[i, j:j + 8] = values[k]
    features = pd.DataFrame(table, index=pd.Index(subjects, name="subject_id"), columns=columns)
    empty = [c for c in columns if features[c].isna().all()]
    if empty:
        logger.warning(f"Dropping {len(empty)} feature columns with no observed value: {empty}")
        features = features.drop(columns=empty)
    return features
