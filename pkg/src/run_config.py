import json
from typing import Dict, List, Literal, Optional, Union

import numpy as np
from pydantic import BaseModel, Field, ValidationError, field_validator, model_validator

from config import BENCHMARK_CONFIG, MODEL_KINDS, REFERENCE_GAMMAS
from util.errors import UsageError


class GammaGrid(BaseModel):
    low: float = BENCHMARK_CONFIG["gamma_grid"]["low"]
    high: float = BENCHMARK_CONFIG["gamma_grid"]["high"]
    num: int = BENCHMARK_CONFIG["gamma_grid"]["num"]

    @model_validator(mode="after")
    def _ordered(self):
        if not 0 < self.low <= self.high or self.num < 1:
            raise ValueError("gamma grid needs 0 < low <= high and num >= 1")
        return self

    def values(self) -> List[float]:
        return np.logspace(np.log10(self.low), np.log10(self.high), self.num).tolist()


class RunConfig(BaseModel):
    """One benchmark run, read from a JSON file."""
    data_path: str
    series_path: Optional[str] = None
    seed: int = BENCHMARK_CONFIG["seed"]
    epsilon: float = Field(BENCHMARK_CONFIG["epsilon"], gt=0)
    test_fraction: float = Field(BENCHMARK_CONFIG["test_fraction"], gt=0, lt=1)
    eta: float = Field(BENCHMARK_CONFIG["eta"], gt=0, lt=1)
    gamma_grid: Union[List[float], GammaGrid] = Field(default_factory=GammaGrid)
    gammas: Union[Literal["reference"], Dict[str, float], None] = None
    models: List[str] = Field(default_factory=lambda: list(MODEL_KINDS))
    cv_folds: int = Field(BENCHMARK_CONFIG["cv_folds"], ge=2)
    kind_overrides: Dict[str, Literal["continuous", "binary"]] = Field(default_factory=dict)
    output_dir: str = BENCHMARK_CONFIG["output_dir"]
    one_per_subject: bool = False
    n_jobs: int = BENCHMARK_CONFIG["n_jobs"]
    alpha: float = Field(BENCHMARK_CONFIG["alpha"], gt=0, lt=1)
    window_hours: Optional[float] = Field(None, gt=0)

    @field_validator("models")
    @classmethod
    def _known_models(cls, models):
        unknown = [m for m in models if m not in MODEL_KINDS]
        if unknown:
            raise ValueError(f"unknown models {unknown}; choose among {MODEL_KINDS}")
        if not models:
            raise ValueError("at least one model is needed")
        return [m for m in MODEL_KINDS if m in models]

    @field_validator("gamma_grid")
    @classmethod
    def _positive_grid(cls, grid):
        if isinstance(grid, list) and (not grid or any(g <= 0 for g in grid)):
            raise ValueError("an explicit gamma grid must be nonempty and positive")
        return grid

    def grid_values(self) -> List[float]:
        return list(self.gamma_grid) if isinstance(self.gamma_grid, list) else self.gamma_grid.values()

    def fixed_gamma(self, kind: str) -> Optional[float]:
        """Gamma to use without cross-validation, if the run fixes one for this model."""
        if self.gammas == "reference":
            return REFERENCE_GAMMAS[kind]
        if isinstance(self.gammas, dict):
            return self.gammas.get(kind)
        return None


def load_run_config(path: str) -> RunConfig:
    try:
        with open(path) as handle:
            return RunConfig.model_validate(json.load(handle))
    except (OSError, json.JSONDecodeError) as e:
        raise UsageError(f"cannot read run config '{path}': {e}") from e
    except ValidationError as e:
        raise UsageError(f"invalid run config '{path}': {e}") from e
