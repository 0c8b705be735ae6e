import json
from typing import Any, Dict, Sequence, Union

import numpy as np

from models.binary_models import FittedLinearModel
from models.survival_models import CoxModel, MixtureDurationModel
from src.core_data import PenaltyConfig
from src.nonparametric import BaselineHazard, StepSurvivalCurve
from util.errors import DataError

FittedModel = Union[FittedLinearModel, CoxModel, MixtureDurationModel]


def _curve_to_dict(curve: StepSurvivalCurve) -> Dict[str, Any]:
    payload = {"times": curve.times.tolist(), "survival": curve.survival.tolist()}
    if curve.lower95 is not None:
        payload["lower95"] = curve.lower95.tolist()
        payload["upper95"] = curve.upper95.tolist()
    return payload


def _curve_from_dict(payload: Dict[str, Any]) -> StepSurvivalCurve:
    return StepSurvivalCurve(payload["times"], payload["survival"], payload.get("lower95"), payload.get("upper95"))


def model_to_dict(model: FittedModel, names: Sequence[str]) -> Dict[str, Any]:
    """JSON-ready document: mode tag, penalty, named coefficients and the fitted curves or rates."""
    if len(names) != len(model.coefficients):
        raise DataError(f"{len(names)} names for {len(model.coefficients)} coefficients")
    document = {
        "mode": model.kind,
        "penalty": {"gamma": model.penalty.gamma, "eta": model.penalty.eta},
        "coefficients": [{"name": str(n), "value": float(v)} for n, v in zip(names, model.coefficients)],
    }
    if isinstance(model, FittedLinearModel):
        document["intercept"] = model.intercept
        document["converged"] = model.converged
    elif isinstance(model, CoxModel):
        document["baseline"] = {"times": model.baseline.times.tolist(),
                                "cumulative": model.baseline.cumulative.tolist()}
    else:
        document.update({
            "intercept": model.intercept,
            "rate_high": model.rate_high,
            "rate_low": model.rate_low,
            "km_high": _curve_to_dict(model.km_high),
            "km_low": _curve_to_dict(model.km_low),
            "n_iter": model.n_iter,
            "converged": model.converged,
        })
    return document


def model_from_dict(document: Dict[str, Any]) -> FittedModel:
    try:
        mode = document["mode"]
        penalty = PenaltyConfig(**document["penalty"])
        beta = np.array([c["value"] for c in document["coefficients"]], dtype=float)
        if mode in ("logistic", "svm"):
            return FittedLinearModel(mode, beta, float(document["intercept"]), penalty,
                                     bool(document.get("converged", True)))
        if mode == "cox":
            baseline = BaselineHazard(document["baseline"]["times"], document["baseline"]["cumulative"])
            return CoxModel(beta, baseline, penalty)
        if mode in ("cmix", "cure"):
            return MixtureDurationModel(
                beta=beta,
                intercept=float(document["intercept"]),
                rate_high=float(document["rate_high"]),
                rate_low=float(document["rate_low"]),
                mode=mode,
                km_high=_curve_from_dict(document["km_high"]),
                km_low=_curve_from_dict(document["km_low"]),
                penalty=penalty,
                n_iter=int(document.get("n_iter", 0)),
                converged=bool(document.get("converged", True)),
            )
    except (KeyError, TypeError) as e:
        raise DataError(f"malformed model document: {e}") from e
    raise DataError(f"unknown model mode '{mode}'")


def coefficient_names(document: Dict[str, Any]):
    return [c["name"] for c in document["coefficients"]]


def save_model(model: FittedModel, names: Sequence[str], path: str):
    with open(path, "w") as handle:
        json.dump(model_to_dict(model, names), handle, indent=2, sort_keys=True)


def load_model(path: str) -> FittedModel:
    try:
        with open(path) as handle:
            return model_from_dict(json.load(handle))
    except (OSError, json.JSONDecodeError) as e:
        raise DataError(f"cannot read model file '{path}': {e}") from e
