from dataclasses import dataclass, field
from typing import Dict, List, Optional, Tuple

import numpy as np
import pandas as pd

from config import BENCHMARK_CONFIG, BINARY_KINDS, SURVIVAL_KINDS
from models.binary_models import labels_from_arrays
from models.survival_models import MixtureDurationModel, mixture_marker
from src.core_data import (Dataset, PenaltyConfig, constant_columns, drop_columns, fit_standardizer,
                           load_dataset, split_indices, standardize)
from src.evaluation import (EXCLUDED, auc, c_index, group_summaries, group_test_battery, importance_similarity,
                            significant_tests, top_importances)
from src.longitudinal_features import extract_features
from src.report import ComparisonReport
from src.run_config import RunConfig, load_run_config
from src.run_store import RunStore, compute_run_id
from src.selection import fit_model, horizon_scores, kfold_cv, risk_scores
from util.errors import DataError, PrognosisError
from util.logger import get_logger

logger = get_logger(__name__)


@dataclass
class PreparedData:
    full: Dataset
    train: Dataset
    test: Dataset
    raw_full: Dataset
    dropped: List[str] = field(default_factory=list)


@dataclass
class FittedModels:
    models: Dict[str, object]
    gammas: Dict[str, float]
    cross_validation: Dict[str, dict]


def _tagged(kind: str, error: PrognosisError) -> PrognosisError:
    tagged = type(error)(f"[{kind}] {error}")
    if hasattr(error, "trace"):
        tagged.trace = error.trace
    return tagged


class BenchmarkOrchestrator:
    """
        Runs the whole comparison on one dataset: split, standardize on the
        training part, select gammas, fit every model, then evaluate and test.
    """
    def __init__(self, config: RunConfig):
        self.config = config
        logger.info(f"Benchmark orchestrator ready for models {config.models}")

    def prepare(self, data: Dataset) -> PreparedData:
        train_idx, test_idx = split_indices(data.n, self.config.test_fraction, self.config.seed)
        dropped = constant_columns(data.subset(train_idx))
        if dropped:
            logger.warning(f"Dropping covariates constant on the training part: {dropped}")
            data = drop_columns(data, dropped)
        if data.d == 0:
            raise DataError("no covariate left after dropping constant columns")
        params = fit_standardizer(data.subset(train_idx))
        full = standardize(data, params)
        logger.info(f"Prepared {len(train_idx)} training and {len(test_idx)} test subjects, {data.d} covariates")
        return PreparedData(full, full.subset(train_idx), full.subset(test_idx), data, dropped)

    def _gamma_for(self, kind: str, train: Dataset) -> Tuple[float, Optional[dict]]:
        fixed = self.config.fixed_gamma(kind)
        if fixed is not None:
            logger.info(f"[{kind}] using fixed gamma {fixed:g}")
            return fixed, None
        result = kfold_cv(train, kind, self.config.grid_values(), eta=self.config.eta, k=self.config.cv_folds,
                          seed=self.config.seed, epsilon=self.config.epsilon, n_jobs=self.config.n_jobs)
        return result.chosen_gamma, result.to_dict()

    def fit_all(self, train: Dataset) -> FittedModels:
        models, gammas, cv = {}, {}, {}
        for kind in self.config.models:
            try:
                gamma, cv_summary = self._gamma_for(kind, train)
                logger.info(f"[{kind}] fitting on {train.n} training subjects")
                models[kind] = fit_model(kind, train, PenaltyConfig(gamma, self.config.eta),
                                         self.config.epsilon, self.config.seed)
            except PrognosisError as e:
                logger.error(f"[{kind}] failed: {e}")
                raise _tagged(kind, e) from e
            gammas[kind] = gamma
            if cv_summary is not None:
                cv[kind] = cv_summary
        return FittedModels(models, gammas, cv)

    def evaluate(self, fitted: FittedModels, test: Dataset) -> pd.DataFrame:
        """C-index for survival models, test AUC for all, bridged through 1 - S(epsilon | x) for survival ones."""
        task = labels_from_arrays(test.y, test.delta, self.config.epsilon)
        X_labeled = test.X[task.retained]
        rows = []
        for kind, model in fitted.models.items():
            if kind in SURVIVAL_KINDS:
                score = c_index(test.y, test.delta, risk_scores(kind, model, test.X))
                rows.append({"setting": "survival", "model": kind, "metric": "c_index", "via": "marker",
                             "score": score})
            via = "direct" if kind in BINARY_KINDS else "bridge"
            score = auc(task.labels, horizon_scores(kind, model, X_labeled, self.config.epsilon))
            rows.append({"setting": "binary", "model": kind, "metric": "auc", "via": via, "score": score})
        logger.info(f"Evaluated {len(rows)} scores on {test.n} test subjects ({task.n_excluded} excluded from AUC)")
        return pd.DataFrame(rows, columns=["setting", "model", "metric", "via", "score"])

    @staticmethod
    def importances(fitted: FittedModels, names) -> pd.DataFrame:
        frame = pd.DataFrame({kind: np.abs(model.coefficients) for kind, model in fitted.models.items()},
                             index=list(names)).T
        frame.index.name = "model"
        return frame

    def groupings(self, fitted: FittedModels, full: Dataset) -> Dict[str, np.ndarray]:
        schemes = {}
        mixture = next((fitted.models[k] for k in ("cmix", "cure") if k in fitted.models), None)
        if mixture is not None:
            schemes[mixture.mode] = (mixture_marker(mixture, full.X) > 0.5).astype(int)
        task = labels_from_arrays(full.y, full.delta, self.config.epsilon)
        epsilon_groups = np.full(full.n, EXCLUDED)
        epsilon_groups[task.retained] = task.labels
        schemes["epsilon"] = epsilon_groups

        usable = {}
        for name, grouping in schemes.items():
            if np.any(grouping == 0) and np.any(grouping == 1):
                usable[name] = grouping
            else:
                logger.warning(f"Grouping '{name}' leaves one group empty; not tested")
        return usable

    @staticmethod
    def curves(fitted: FittedModels) -> pd.DataFrame:
        frames = []
        for kind, model in fitted.models.items():
            if not isinstance(model, MixtureDurationModel):
                continue
            for group, curve in (("high", model.km_high), ("low", model.km_low)):
                frame = curve.to_frame()
                frame.insert(0, "group", group)
                frame.insert(0, "model", kind)
                frames.append(frame)
        columns = ["model", "group", "time", "survival", "lower95", "upper95"]
        return pd.concat(frames, ignore_index=True)[columns] if frames else pd.DataFrame(columns=columns)

    def run_on(self, data: Dataset) -> ComparisonReport:
        prepared = self.prepare(data)
        fitted = self.fit_all(prepared.train)
        metrics = self.evaluate(fitted, prepared.test)

        importance = self.importances(fitted, prepared.full.names)
        if len(fitted.models) >= 2 and prepared.full.d >= 2:
            similarity = importance_similarity(importance)
        else:
            similarity = pd.DataFrame(index=importance.index, columns=importance.index, dtype=float)
        similarity.index.name = "model"

        schemes = self.groupings(fitted, prepared.full)
        if schemes:
            tests = group_test_battery(prepared.raw_full, schemes, self.config.alpha)
            summaries = group_summaries(prepared.raw_full, schemes)
            selected = significant_tests(tests, list(schemes), self.config.alpha, BENCHMARK_CONFIG["top_tests"])
        else:
            tests, summaries, selected = pd.DataFrame(), pd.DataFrame(), {}

        top = top_importances(importance, "cmix", BENCHMARK_CONFIG["top_covariates"])
        summary = {
            "seed": self.config.seed,
            "epsilon": self.config.epsilon,
            "eta": self.config.eta,
            "n_subjects": prepared.full.n,
            "n_train": prepared.train.n,
            "n_test": prepared.test.n,
            "n_covariates": prepared.full.d,
            "dropped_covariates": prepared.dropped,
            "test_events": int(prepared.test.delta.sum()),
        }
        return ComparisonReport(
            metrics=metrics,
            importance=importance,
            similarity=similarity,
            tests=tests,
            group_summaries=summaries,
            curves=self.curves(fitted),
            top_importances=[{"covariate": str(name), **{k: float(v) for k, v in row.items()}}
                             for name, row in top.iterrows()],
            significant_tests=selected,
            chosen_gammas=fitted.gammas,
            cross_validation=fitted.cross_validation,
            summary=summary,
        )

    def load(self) -> Dataset:
        features = None
        if self.config.series_path:
            try:
                series = pd.read_csv(self.config.series_path)
            except (OSError, pd.errors.ParserError) as e:
                raise DataError(f"cannot read series table '{self.config.series_path}': {e}") from e
            features = extract_features(series, self.config.window_hours, seed=self.config.seed,
                                        n_jobs=self.config.n_jobs)
        return load_dataset(self.config.data_path, self.config.kind_overrides, self.config.one_per_subject,
                            self.config.seed, features)


def _read_bytes(path: Optional[str]) -> bytes:
    if not path:
        return b""
    try:
        with open(path, "rb") as handle:
            return handle.read()
    except OSError as e:
        raise DataError(f"cannot read '{path}': {e}") from e


def run_benchmark(config_path: str, reuse: bool = False) -> Tuple[ComparisonReport, str]:
    """Full run from a config file; returns the report and the directory it was stored in."""
    config = load_run_config(config_path)
    run_id = compute_run_id(_read_bytes(config_path), _read_bytes(config.data_path),
                            _read_bytes(config.series_path))
    store = RunStore(config.output_dir)
    if reuse:
        existing = store.find_run(run_id)
        if existing:
            return store.retrieve_run(existing), existing

    logger.info(f"Starting benchmark run {run_id}")
    orchestrator = BenchmarkOrchestrator(config)
    report = orchestrator.run_on(orchestrator.load())
    directory = store.store_run(run_id, report, config.models)
    logger.info(f"Benchmark run {run_id} finished")
    return report, directory
