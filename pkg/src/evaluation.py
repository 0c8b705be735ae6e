from fractions import Fraction
from math import comb
from typing import Callable, Dict, List, Mapping, Optional, Sequence, Tuple

import numpy as np
import pandas as pd
from scipy.stats import mannwhitneyu, rankdata
from statsmodels.stats.multitest import multipletests

from src.core_data import BINARY, Dataset
from src.nonparametric import logrank_test
from util.errors import DataError
from util.logger import get_logger

logger = get_logger(__name__)

EXCLUDED = -1


def c_index(y: np.ndarray, delta: np.ndarray, markers: np.ndarray, tau: Optional[float] = None,
            chunk_size: int = 2048) -> float:
    """
        Harrell's estimator restricted to times below tau: among ordered pairs
        with y_i < y_j, an observed event for i and y_i < tau, the fraction where
        i has the higher marker. Tied markers count one half.
    """
    y = np.asarray(y, dtype=float)
    delta = np.asarray(delta, dtype=int)
    markers = np.asarray(markers, dtype=float)
    if not len(y) == len(delta) == len(markers):
        raise DataError("durations, indicators and markers must have equal length")
    tau = float(np.max(y)) if tau is None else tau

    anchors = np.flatnonzero((delta == 1) & (y < tau))
    concordant, comparable = 0.0, 0
    for start in range(0, len(anchors), chunk_size):
        rows = anchors[start:start + chunk_size]
        pairs = y[rows, None] < y[None, :]
        higher = markers[rows, None] > markers[None, :]
        tied = markers[rows, None] == markers[None, :]
        comparable += int(pairs.sum())
        concordant += float(np.sum(pairs & higher)) + 0.5 * float(np.sum(pairs & tied))
    if comparable == 0:
        raise DataError("no comparable pair for the C-index")
    return concordant / comparable


def auc(labels: np.ndarray, scores: np.ndarray) -> float:
    """Mann-Whitney estimate from average ranks, so tied scores count one half."""
    labels = np.asarray(labels, dtype=int)
    scores = np.asarray(scores, dtype=float)
    if len(labels) != len(scores):
        raise DataError("labels and scores must have equal length")
    n_pos = int(np.sum(labels == 1))
    n_neg = int(np.sum(labels == 0))
    if n_pos == 0 or n_neg == 0:
        raise DataError("AUC needs both classes")
    ranks = rankdata(scores, method="average")
    rank_sum = float(ranks[labels == 1].sum())
    return (rank_sum - n_pos * (n_pos + 1) / 2.0) / (n_pos * n_neg)


def bridge_scores(survival_predictor: Callable[[np.ndarray, float], np.ndarray], X_test: np.ndarray,
                  epsilon: float) -> np.ndarray:
    """Risk of an event by the horizon, 1 - S(epsilon | x), from any survival predictor."""
    if not epsilon > 0:
        raise DataError(f"epsilon must be positive, got {epsilon}")
    return 1.0 - np.atleast_1d(np.asarray(survival_predictor(X_test, epsilon), dtype=float))


def importance_similarity(importances: pd.DataFrame) -> pd.DataFrame:
    """Pearson correlations of absolute importance rows; rows without variance give missing entries."""
    if importances.shape[0] < 2 or importances.shape[1] < 2:
        raise DataError("similarity needs at least two models and two covariates")
    magnitudes = importances.abs().to_numpy(dtype=float)
    centered = magnitudes - magnitudes.mean(axis=1, keepdims=True)
    norms = np.sqrt(np.sum(centered ** 2, axis=1))
    constant = norms == 0
    if constant.any():
        logger.warning(f"Constant importance rows for {list(importances.index[constant])}; "
                       "their similarities are missing")
    with np.errstate(divide="ignore", invalid="ignore"):
        similarity = (centered @ centered.T) / np.outer(norms, norms)
    similarity[constant, :] = np.nan
    similarity[:, constant] = np.nan
    similarity = np.clip(similarity, -1.0, 1.0)
    np.fill_diagonal(similarity, np.where(constant, np.nan, 1.0))
    return pd.DataFrame(similarity, index=importances.index, columns=importances.index)


def _hypergeometric(a: int, row1: int, row2: int, col1: int) -> Fraction:
    return Fraction(comb(row1, a) * comb(row2, col1 - a), comb(row1 + row2, col1))


def fisher_exact(table) -> float:
    """
        Two-sided p-value summing the probabilities of all tables with the
        observed margins that are no more probable than the observed one.
        Probabilities are exact rationals; only the result is rounded.
    """
    counts = np.asarray(table)
    if counts.shape != (2, 2):
        raise DataError("fisher_exact expects a 2x2 table")
    if np.any(counts < 0) or not np.all(np.equal(np.mod(counts, 1), 0)):
        raise DataError("table counts must be non-negative integers")
    (a, b), (c, d) = [[int(v) for v in row] for row in counts]
    row1, row2, col1 = a + b, c + d, a + c
    col2 = b + d
    if min(row1, row2, col1, col2) == 0:
        return 1.0

    observed = _hypergeometric(a, row1, row2, col1)
    total = Fraction(0)
    for k in range(max(0, col1 - row2), min(row1, col1) + 1):
        p = _hypergeometric(k, row1, row2, col1)
        if p <= observed:
            total += p
    return float(min(total, Fraction(1)))


def wilcoxon_rank_sum(sample_a, sample_b) -> float:
    """Two-sided normal approximation with tie-corrected variance and continuity correction."""
    a = np.asarray(sample_a, dtype=float)
    b = np.asarray(sample_b, dtype=float)
    if len(a) == 0 or len(b) == 0:
        raise DataError("wilcoxon_rank_sum needs two nonempty samples")
    pooled = np.concatenate([a, b])
    if np.all(pooled == pooled[0]):
        return 1.0
    result = mannwhitneyu(a, b, alternative="two-sided", method="asymptotic", use_continuity=True)
    return float(np.clip(result.pvalue, 0.0, 1.0))


def bonferroni(p_values: Sequence[float], alpha: float = 0.05) -> Tuple[np.ndarray, np.ndarray]:
    """Corrected p = min(1, m p); a test is rejected when its corrected p is below alpha."""
    p = np.asarray(p_values, dtype=float)
    if p.size == 0:
        return p.copy(), np.zeros(0, dtype=bool)
    if np.any((p < 0) | (p > 1)):
        raise DataError("p-values must lie in [0, 1]")
    _, corrected, _, _ = multipletests(p, alpha=alpha, method="bonferroni")
    return corrected, corrected < alpha


def _two_groups(grouping: np.ndarray, name: str) -> np.ndarray:
    grouping = np.asarray(grouping, dtype=int)
    members = grouping != EXCLUDED
    if not (np.any(grouping[members] == 0) and np.any(grouping[members] == 1)):
        raise DataError(f"grouping '{name}' needs two nonempty groups")
    return grouping


def _covariate_logrank(y, delta, column: np.ndarray, kind: str) -> float:
    high = column > np.median(column) if kind != BINARY else column == 1
    if high.all() or not high.any():
        return 1.0
    return logrank_test(y[high], delta[high], y[~high], delta[~high])[1]


def _scheme_p_value(column: np.ndarray, grouping: np.ndarray, kind: str) -> float:
    members = grouping != EXCLUDED
    values, groups = column[members], grouping[members]
    if kind == BINARY:
        table = [[int(np.sum((groups == g) & (values == v))) for v in (0, 1)] for g in (0, 1)]
        return fisher_exact(table)
    return wilcoxon_rank_sum(values[groups == 0], values[groups == 1])


def _corrected(column: pd.Series, alpha: float) -> pd.Series:
    tested = column.notna()
    corrected = pd.Series(np.nan, index=column.index)
    if tested.any():
        corrected[tested] = bonferroni(column[tested].to_numpy(), alpha)[0]
    return corrected


def group_test_battery(data: Dataset, groupings: Mapping[str, np.ndarray], alpha: float = 0.05) -> pd.DataFrame:
    """
        One row per covariate. For every grouping scheme, Fisher's exact test on
        binary covariates and the Wilcoxon rank-sum test on continuous ones;
        plus one log-rank test per covariate on its own median or level split.
        Each p-value column is Bonferroni-corrected over the tested covariates.
        Constant covariates are flagged and left untested.
    """
    schemes = {name: _two_groups(g, name) for name, g in groupings.items()}
    for name, g in schemes.items():
        if len(g) != data.n:
            raise DataError(f"grouping '{name}' has {len(g)} entries for {data.n} subjects")

    rows = []
    for j, (name, kind) in enumerate(zip(data.names, data.kinds)):
        column = data.X[:, j]
        degenerate = bool(np.all(column == column[0]))
        row = {"covariate": name, "kind": kind, "degenerate": degenerate}
        for scheme, grouping in schemes.items():
            row[f"p_{scheme}"] = np.nan if degenerate else _scheme_p_value(column, grouping, kind)
        row["p_logrank"] = np.nan if degenerate else _covariate_logrank(data.y, data.delta, column, kind)
        rows.append(row)

    table = pd.DataFrame(rows)
    for family in [f"p_{s}" for s in schemes] + ["p_logrank"]:
        table[f"{family}_corrected"] = _corrected(table[family], alpha)
    logger.info(f"Tested {len(rows)} covariates over {len(schemes)} groupings "
                f"({int(table['degenerate'].sum())} degenerate)")
    return table


def group_summaries(data: Dataset, groupings: Mapping[str, np.ndarray]) -> pd.DataFrame:
    """Per scheme, group and covariate: quartiles for continuous covariates, proportion of ones for binary."""
    rows = []
    for scheme, grouping in groupings.items():
        grouping = np.asarray(grouping, dtype=int)
        for group in (0, 1):
            members = grouping == group
            for j, (name, kind) in enumerate(zip(data.names, data.kinds)):
                values = data.X[members, j]
                row = {"scheme": scheme, "group": group, "covariate": name, "kind": kind, "n": int(members.sum()),
                       "min": np.nan, "q1": np.nan, "median": np.nan, "q3": np.nan, "max": np.nan,
                       "proportion": np.nan}
                if len(values) and kind == BINARY:
                    row["proportion"] = float(values.mean())
                elif len(values):
                    row.update(zip(("min", "q1", "median", "q3", "max"),
                                   np.quantile(values, [0.0, 0.25, 0.5, 0.75, 1.0]).tolist()))
                rows.append(row)
    return pd.DataFrame(rows)


def top_importances(importances: pd.DataFrame, order_by: str = "cmix", k: int = 20) -> pd.DataFrame:
    """Covariates by decreasing absolute importance of one model, all models side by side."""
    magnitudes = importances.abs()
    if order_by not in magnitudes.index:
        order_by = magnitudes.index[0]
    ranked = magnitudes.T.sort_values(order_by, ascending=False, kind="mergesort")
    return ranked.head(k)


def significant_tests(tests: pd.DataFrame, schemes: Sequence[str], alpha: float = 0.05,
                      k: int = 6) -> Dict[str, List[Dict[str, float]]]:
    selected = {}
    for scheme in schemes:
        column = f"p_{scheme}_corrected"
        hits = tests[tests[column] < alpha].sort_values([column, "covariate"], kind="mergesort").head(k)
        selected[scheme] = [{"covariate": r["covariate"], "p": float(r[f"p_{scheme}"]), "p_corrected": float(r[column])}
                            for _, r in hits.iterrows()]
    return selected
