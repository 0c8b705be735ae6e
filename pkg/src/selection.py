from dataclasses import dataclass, field
from typing import Dict, List, Optional, Sequence

import numpy as np
from joblib import Parallel, delayed

from config import BENCHMARK_CONFIG, BINARY_KINDS, MODEL_KINDS
from models.binary_models import labels_from_arrays, logistic_fit, predict_score, svm_fit
from models.survival_models import cmix_fit, cox_fit, predict_survival, survival_marker
from src.core_data import Dataset, PenaltyConfig
from src.evaluation import auc, c_index
from util.errors import DataError, NumericalError
from util.logger import get_logger

logger = get_logger(__name__)


@dataclass
class CVResult:
    gamma_grid: np.ndarray
    fold_scores: np.ndarray
    chosen_gamma: float
    used_folds: List[int] = field(default_factory=list)

    @property
    def mean_scores(self) -> np.ndarray:
        return np.nanmean(self.fold_scores, axis=1)

    def to_dict(self) -> Dict:
        return {
            "gamma_grid": self.gamma_grid.tolist(),
            "mean_scores": [None if not np.isfinite(s) else float(s) for s in self.mean_scores],
            "chosen_gamma": self.chosen_gamma,
            "used_folds": list(self.used_folds),
        }


def default_gamma_grid() -> np.ndarray:
    grid = BENCHMARK_CONFIG["gamma_grid"]
    return np.logspace(np.log10(grid["low"]), np.log10(grid["high"]), grid["num"])


def fit_model(kind: str, data: Dataset, penalty: PenaltyConfig, epsilon: float, seed: int = 0):
    """Binary kinds train on the epsilon-labeled retained subjects, survival kinds on every record."""
    if kind not in MODEL_KINDS:
        raise DataError(f"unknown model kind '{kind}'")
    if kind in BINARY_KINDS:
        task = labels_from_arrays(data.y, data.delta, epsilon)
        fit = logistic_fit if kind == "logistic" else svm_fit
        return fit(data.X[task.retained], task.labels, penalty)
    if kind == "cox":
        return cox_fit(data.X, data.y, data.delta, penalty)
    return cmix_fit(data.X, data.y, data.delta, penalty, mode=kind, seed=seed)


def risk_scores(kind: str, model, X: np.ndarray) -> np.ndarray:
    """Higher means riskier: decision score for binary kinds, marker for survival kinds."""
    if kind in BINARY_KINDS:
        return np.atleast_1d(predict_score(model, X))
    return survival_marker(model, X)


def horizon_scores(kind: str, model, X: np.ndarray, epsilon: float) -> np.ndarray:
    """Scores for the epsilon-horizon question; survival kinds go through 1 - S(epsilon | x)."""
    if kind in BINARY_KINDS:
        return risk_scores(kind, model, X)
    return 1.0 - predict_survival(model, X, epsilon)


def validation_score(kind: str, model, held_out: Dataset, epsilon: float) -> float:
    if kind in BINARY_KINDS:
        task = labels_from_arrays(held_out.y, held_out.delta, epsilon)
        return auc(task.labels, risk_scores(kind, model, held_out.X[task.retained]))
    return c_index(held_out.y, held_out.delta, risk_scores(kind, model, held_out.X))


def _fold_usable(kind: str, train: Dataset, held_out: Dataset, epsilon: float) -> Optional[str]:
    if kind in BINARY_KINDS:
        for part, name in ((train, "training"), (held_out, "held-out")):
            excluded = (part.delta == 0) & (part.y <= epsilon)
            labels = (part.delta[~excluded] == 1) & (part.y[~excluded] <= epsilon)
            if len(np.unique(labels)) < 2:
                return f"{name} part lacks one of the two classes"
        return None
    if not np.any(train.delta == 1):
        return "training part has no event"
    events = held_out.delta == 1
    if not np.any(events[:, None] & (held_out.y[:, None] < held_out.y[None, :])):
        return "held-out part has no comparable pair"
    return None


def _cell(kind, data, train_idx, held_idx, gamma, eta, epsilon, seed) -> float:
    train, held_out = data.subset(train_idx), data.subset(held_idx)
    try:
        model = fit_model(kind, train, PenaltyConfig(gamma, eta), epsilon, seed)
        return validation_score(kind, model, held_out, epsilon)
    except NumericalError as e:
        logger.warning(f"[{kind}] gamma={gamma:g} failed on one fold: {e}")
        return float("nan")


def fold_assignment(n: int, k: int, seed: int) -> np.ndarray:
    """Fold id of every subject; sizes differ by at most one."""
    if k < 2:
        raise DataError(f"k must be at least 2, got {k}")
    if n < k:
        raise DataError(f"cannot make {k} folds out of {n} subjects")
    folds = np.empty(n, dtype=int)
    for fold, members in enumerate(np.array_split(np.random.default_rng(seed).permutation(n), k)):
        folds[members] = fold
    return folds


def kfold_cv(data: Dataset, model_kind: str, gamma_grid: Sequence[float], eta: float = None, k: int = None,
             seed: int = 0, epsilon: float = None, n_jobs: int = None) -> CVResult:
    """
        Held-out AUC for binary kinds and C-index for survival kinds, averaged
        over the usable folds. The best mean wins; ties go to the larger gamma.
    """
    eta = BENCHMARK_CONFIG["eta"] if eta is None else eta
    k = BENCHMARK_CONFIG["cv_folds"] if k is None else k
    epsilon = BENCHMARK_CONFIG["epsilon"] if epsilon is None else epsilon
    n_jobs = BENCHMARK_CONFIG["n_jobs"] if n_jobs is None else n_jobs
    grid = np.asarray(sorted(set(float(g) for g in gamma_grid)))
    if grid.size == 0:
        raise DataError("gamma grid is empty")

    folds = fold_assignment(data.n, k, seed)
    splits = []
    for fold in range(k):
        train_idx, held_idx = np.flatnonzero(folds != fold), np.flatnonzero(folds == fold)
        reason = _fold_usable(model_kind, data.subset(train_idx), data.subset(held_idx), epsilon)
        if reason:
            logger.warning(f"[{model_kind}] skipping fold {fold}: {reason}")
            continue
        splits.append((fold, train_idx, held_idx))
    if not splits:
        raise DataError(f"[{model_kind}] every cross-validation fold was skipped")

    logger.info(f"[{model_kind}] cross-validating {len(grid)} gammas over {len(splits)} folds")
    cells = Parallel(n_jobs=n_jobs)(
        delayed(_cell)(model_kind, data, train_idx, held_idx, gamma, eta, epsilon, seed)
        for gamma in grid for _, train_idx, held_idx in splits
    )
    scores = np.asarray(cells, dtype=float).reshape(len(grid), len(splits))

    with np.errstate(all="ignore"):
        means = np.array([np.nanmean(row) if np.isfinite(row).any() else np.nan for row in scores])
    if not np.isfinite(means).any():
        raise NumericalError(f"[{model_kind}] no gamma could be fitted on any fold")
    best = np.nanmax(means)
    chosen = float(grid[np.flatnonzero(means >= best - 1e-12).max()])
    logger.info(f"[{model_kind}] chosen gamma {chosen:g} (mean score {best:.4f})")
    return CVResult(grid, scores, chosen, [fold for fold, _, _ in splits])
