from dataclasses import dataclass
from typing import Dict, List, Mapping, Optional, Sequence, Tuple

import numpy as np
import pandas as pd

from util.errors import DataError
from util.logger import get_logger

logger = get_logger(__name__)

CONTINUOUS = "continuous"
BINARY = "binary"
RESERVED_COLUMNS = ("y", "delta", "subject_id")


def _frozen(array: np.ndarray) -> np.ndarray:
    array = np.array(array, dtype=float, copy=True)
    array.setflags(write=False)
    return array


@dataclass(frozen=True, eq=False)
class SurvivalRecord:
    y: float
    delta: int
    x: np.ndarray

    def __post_init__(self):
        if not self.y >= 0:
            raise DataError(f"duration must be non-negative, got {self.y}")
        if self.delta not in (0, 1):
            raise DataError(f"event indicator must be 0 or 1, got {self.delta}")
        object.__setattr__(self, "x", _frozen(self.x))
        if np.isnan(self.x).any():
            raise DataError("covariate row contains missing values")


@dataclass(frozen=True)
class PenaltyConfig:
    gamma: float
    eta: float = 0.1

    def __post_init__(self):
        if not self.gamma >= 0:
            raise DataError(f"gamma must be >= 0, got {self.gamma}")
        if not 0 < self.eta < 1:
            raise DataError(f"eta must lie in (0, 1), got {self.eta}")

    @property
    def l1(self) -> float:
        return self.gamma * (1.0 - self.eta)

    @property
    def l2(self) -> float:
        return self.gamma * self.eta


@dataclass(frozen=True, eq=False)
class Dataset:
    """
        Covariate matrix with the observed duration and event indicator of
        every subject. Arrays are read-only once built.
    """
    X: np.ndarray
    y: np.ndarray
    delta: np.ndarray
    names: Tuple[str, ...]
    kinds: Tuple[str, ...]
    subject_ids: Optional[Tuple[str, ...]] = None

    def __post_init__(self):
        X = _frozen(np.atleast_2d(self.X))
        y = _frozen(np.ravel(self.y))
        try:
            raw_delta = np.asarray(self.delta, dtype=float).ravel()
        except (TypeError, ValueError) as e:
            raise DataError(f"event indicator must be 0 or 1: {e}") from e
        if not np.isin(raw_delta, (0.0, 1.0)).all():
            raise DataError("event indicator must be 0 or 1")
        delta = raw_delta.astype(int)
        delta.setflags(write=False)
        object.__setattr__(self, "X", X)
        object.__setattr__(self, "y", y)
        object.__setattr__(self, "delta", delta)
        object.__setattr__(self, "names", tuple(self.names))
        object.__setattr__(self, "kinds", tuple(self.kinds))
        if self.subject_ids is not None:
            object.__setattr__(self, "subject_ids", tuple(str(s) for s in self.subject_ids))

        n, d = X.shape
        if len(y) != n or len(delta) != n:
            raise DataError(f"expected {n} durations and indicators, got {len(y)} and {len(delta)}")
        if len(self.names) != d or len(self.kinds) != d:
            raise DataError(f"expected {d} covariate names and kinds")
        if self.subject_ids is not None and len(self.subject_ids) != n:
            raise DataError("subject_ids length does not match the number of rows")
        if np.isnan(X).any():
            raise DataError("covariate matrix contains missing values")
        if (y < 0).any() or np.isnan(y).any():
            raise DataError("durations must be non-negative")
        for j, kind in enumerate(self.kinds):
            if kind not in (CONTINUOUS, BINARY):
                raise DataError(f"unknown kind '{kind}' for column '{self.names[j]}'")
            if kind == BINARY and not np.isin(X[:, j], (0.0, 1.0)).all():
                raise DataError(f"binary column '{self.names[j]}' has values outside {{0, 1}}")

    @property
    def n(self) -> int:
        return self.X.shape[0]

    @property
    def d(self) -> int:
        return self.X.shape[1]

    @property
    def records(self) -> List[SurvivalRecord]:
        return [SurvivalRecord(float(self.y[i]), int(self.delta[i]), self.X[i]) for i in range(self.n)]

    def subset(self, indices: Sequence[int]) -> "Dataset":
        indices = np.asarray(indices, dtype=int)
        ids = tuple(self.subject_ids[i] for i in indices) if self.subject_ids is not None else None
        return Dataset(self.X[indices], self.y[indices], self.delta[indices], self.names, self.kinds, ids)

    def with_covariates(self, X: np.ndarray) -> "Dataset":
        return Dataset(X, self.y, self.delta, self.names, self.kinds, self.subject_ids)

    def to_frame(self) -> pd.DataFrame:
        frame = pd.DataFrame(np.array(self.X), columns=list(self.names))
        frame.insert(0, "delta", np.array(self.delta))
        frame.insert(0, "y", np.array(self.y))
        if self.subject_ids is not None:
            frame.insert(0, "subject_id", list(self.subject_ids))
        return frame


@dataclass(frozen=True, eq=False)
class StandardizationParams:
    columns: Tuple[str, ...]
    means: np.ndarray
    sds: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "means", _frozen(self.means))
        object.__setattr__(self, "sds", _frozen(self.sds))
        if (self.sds <= 0).any():
            raise DataError("standard deviations must be strictly positive")


def _most_frequent(observed: pd.Series) -> float:
    counts = observed.value_counts()
    return float(min(counts[counts == counts.max()].index))


def numeric_column(frame: pd.DataFrame, column: str) -> pd.Series:
    try:
        return pd.to_numeric(frame[column], errors="raise").astype(float)
    except (TypeError, ValueError) as e:
        raise DataError(f"column '{column}' has non-numeric cells: {e}") from e


def impute_columns(frame: pd.DataFrame, kinds: Mapping[str, str]) -> pd.DataFrame:
    """Median for continuous columns, most frequent value (smallest on ties) for binary ones."""
    imputed = frame.copy()
    for column, kind in kinds.items():
        values = numeric_column(imputed, column)
        observed = values.dropna()
        if observed.empty:
            raise DataError(f"column '{column}' has no observed values")
        missing = int(values.isna().sum())
        if missing:
            fill = float(observed.median()) if kind == CONTINUOUS else _most_frequent(observed)
            values = values.fillna(fill)
            logger.debug(f"Imputed {missing} cells of '{column}' with {fill:.6g}")
        imputed[column] = values
    return imputed


def infer_kinds(frame: pd.DataFrame, overrides: Optional[Mapping[str, str]] = None) -> Dict[str, str]:
    """A column whose observed values all lie in {0, 1} is binary, the rest continuous."""
    overrides = dict(overrides or {})
    kinds = {}
    for column in frame.columns:
        if column in RESERVED_COLUMNS:
            continue
        if column in overrides:
            kinds[column] = overrides[column]
            continue
        observed = pd.to_numeric(frame[column], errors="coerce").dropna()
        kinds[column] = BINARY if len(observed) and observed.isin((0.0, 1.0)).all() else CONTINUOUS
    unknown = set(overrides) - set(kinds)
    if unknown:
        logger.warning(f"Kind overrides for unknown columns ignored: {sorted(unknown)}")
    return kinds


def impute_missing(raw: pd.DataFrame, kinds: Mapping[str, str]) -> Dataset:
    for column in ("y", "delta"):
        if column not in raw.columns:
            raise DataError(f"missing reserved column '{column}'")
        if raw[column].isna().any():
            raise DataError(f"reserved column '{column}' has missing cells")
    names = [c for c in raw.columns if c not in RESERVED_COLUMNS]
    missing_kinds = [c for c in names if c not in kinds]
    if missing_kinds:
        raise DataError(f"no kind given for columns {missing_kinds}")

    imputed = impute_columns(raw[names], {c: kinds[c] for c in names})
    subject_ids = raw["subject_id"].astype(str).tolist() if "subject_id" in raw.columns else None
    return Dataset(
        X=imputed.to_numpy(dtype=float).reshape(len(raw), len(names)),
        y=numeric_column(raw, "y").to_numpy(),
        delta=numeric_column(raw, "delta").to_numpy(),
        names=tuple(names),
        kinds=tuple(kinds[c] for c in names),
        subject_ids=subject_ids,
    )


def sample_one_per_subject(raw: pd.DataFrame, seed: int) -> pd.DataFrame:
    """Keeps one randomly drawn row for every subject_id."""
    if "subject_id" not in raw.columns:
        return raw
    rng = np.random.default_rng(seed)
    keys = rng.random(len(raw))
    ranked = raw.assign(_key=keys).sort_values(["subject_id", "_key"], kind="mergesort")
    sampled = ranked.groupby("subject_id", sort=True).head(1).drop(columns="_key")
    logger.info(f"Sampled one row per subject: {len(raw)} -> {len(sampled)} rows")
    return sampled.sort_index()


def load_dataset(
    path: str,
    kind_overrides: Optional[Mapping[str, str]] = None,
    one_per_subject: bool = False,
    seed: int = 0,
    extra_features: Optional[pd.DataFrame] = None,
) -> Dataset:
    try:
        raw = pd.read_csv(path)
    except (OSError, pd.errors.ParserError) as e:
        raise DataError(f"cannot read covariate table '{path}': {e}") from e

    if one_per_subject:
        raw = sample_one_per_subject(raw, seed)
    if extra_features is not None:
        if "subject_id" not in raw.columns:
            raise DataError("merging longitudinal features needs a subject_id column")
        raw = raw.assign(subject_id=raw["subject_id"].astype(str))
        features = extra_features.copy()
        features.index = features.index.astype(str)
        raw = raw.merge(features, how="left", left_on="subject_id", right_index=True)

    kinds = infer_kinds(raw, kind_overrides)
    dataset = impute_missing(raw.reset_index(drop=True), kinds)
    logger.info(f"Loaded {dataset.n} subjects x {dataset.d} covariates from {path}")
    return dataset


def fit_standardizer(train: Dataset) -> StandardizationParams:
    columns, means, sds = [], [], []
    for j, (name, kind) in enumerate(zip(train.names, train.kinds)):
        if kind != CONTINUOUS:
            continue
        column = train.X[:, j]
        sd = float(np.std(column, ddof=1)) if train.n > 1 else 0.0
        if not sd > 0:
            raise DataError(f"continuous column '{name}' has zero variance on the training set")
        columns.append(name)
        means.append(float(np.mean(column)))
        sds.append(sd)
    return StandardizationParams(tuple(columns), np.array(means), np.array(sds))


def standardize(data: Dataset, params: StandardizationParams) -> Dataset:
    X = np.array(data.X)
    position = {name: j for j, name in enumerate(data.names)}
    for name, mean, sd in zip(params.columns, params.means, params.sds):
        if name not in position:
            raise DataError(f"column '{name}' missing from the data to standardize")
        j = position[name]
        X[:, j] = (X[:, j] - mean) / sd
    return data.with_covariates(X)


def split_indices(n: int, test_fraction: float, seed: int) -> Tuple[np.ndarray, np.ndarray]:
    if n <= 0:
        raise DataError("cannot split an empty dataset")
    if not 0 < test_fraction < 1:
        raise DataError(f"test_fraction must lie in (0, 1), got {test_fraction}")
    n_test = int(np.floor(n * test_fraction + 0.5))
    if n_test == 0 or n_test == n:
        raise DataError(f"a test fraction of {test_fraction} leaves one side of the split empty for n={n}")
    permutation = np.random.default_rng(seed).permutation(n)
    return np.sort(permutation[n_test:]), np.sort(permutation[:n_test])


def train_test_split(data: Dataset, test_fraction: float, seed: int) -> Tuple[Dataset, Dataset]:
    train_idx, test_idx = split_indices(data.n, test_fraction, seed)
    logger.info(f"Split {data.n} subjects into {len(train_idx)} train / {len(test_idx)} test")
    return data.subset(train_idx), data.subset(test_idx)


def constant_columns(data: Dataset) -> List[str]:
    return [name for j, name in enumerate(data.names) if np.all(data.X[:, j] == data.X[0, j])]


def drop_columns(data: Dataset, names: Sequence[str]) -> Dataset:
    keep = [j for j, name in enumerate(data.names) if name not in set(names)]
    return Dataset(data.X[:, keep], data.y, data.delta, tuple(data.names[j] for j in keep),
                   tuple(data.kinds[j] for j in keep), data.subject_ids)
