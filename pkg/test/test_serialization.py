import json

import numpy as np
import pytest

from models.serialization import coefficient_names, load_model, model_to_dict, save_model
from src.core_data import PenaltyConfig
from src.selection import fit_model, horizon_scores, risk_scores
from util.errors import DataError


@pytest.mark.parametrize("kind", ["logistic", "svm", "cox", "cure", "cmix"])
def test_saved_models_predict_the_same(tmp_path, small_cohort, kind):
    data, _ = small_cohort
    model = fit_model(kind, data, PenaltyConfig(0.05), epsilon=5.0)
    path = tmp_path / f"{kind}.json"
    save_model(model, data.names, str(path))

    document = json.loads(path.read_text())
    assert document["mode"] == kind
    assert document["penalty"] == {"gamma": 0.05, "eta": 0.1}
    assert coefficient_names(document) == list(data.names)

    restored = load_model(str(path))
    np.testing.assert_allclose(risk_scores(kind, restored, data.X), risk_scores(kind, model, data.X))
    np.testing.assert_allclose(horizon_scores(kind, restored, data.X, 5.0), horizon_scores(kind, model, data.X, 5.0))


def test_name_count_must_match(small_cohort):
    data, _ = small_cohort
    model = fit_model("cox", data, PenaltyConfig(0.05), epsilon=5.0)
    with pytest.raises(DataError):
        model_to_dict(model, data.names[:-1])


def test_malformed_document(tmp_path):
    path = tmp_path / "broken.json"
    path.write_text(json.dumps({"mode": "cox"}))
    with pytest.raises(DataError):
        load_model(str(path))
