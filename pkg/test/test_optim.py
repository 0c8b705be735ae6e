import numpy as np
import pytest

from src.core_data import PenaltyConfig
from src.optim import (SmoothObjective, estimate_lipschitz, fista_minimize, kkt_violation, prox_elastic_net,
                       soft_threshold)
from util.errors import NumericalError


def _least_squares(X, y):
    n = len(y)
    return SmoothObjective(
        value=lambda w: float(np.sum((X @ w - y) ** 2) / (2 * n)),
        gradient=lambda w: X.T @ (X @ w - y) / n,
        dimension=X.shape[1],
    )


def test_soft_threshold():
    np.testing.assert_array_equal(soft_threshold(np.array([3.0, -0.5, 1.0]), 1.0), [2.0, 0.0, 0.0])
    with pytest.raises(ValueError):
        soft_threshold(np.array([1.0]), -1.0)


def test_prox_shrinks_then_scales():
    penalty = PenaltyConfig(gamma=1.0, eta=0.5)
    assert prox_elastic_net(np.array([2.0]), 1.0, penalty)[0] == pytest.approx(1.0)
    out = prox_elastic_net(np.array([2.0, 2.0]), 1.0, penalty, penalized=np.array([True, False]))
    np.testing.assert_allclose(out, [1.0, 2.0])


def test_separable_quadratic_has_closed_form():
    b = np.array([3.0, -0.2, 1.5])
    f = SmoothObjective(lambda x: 0.5 * float(np.sum((x - b) ** 2)), lambda x: x - b, 3)
    result = fista_minimize(f, PenaltyConfig(1.0, 0.1), np.zeros(3))
    assert result.converged
    np.testing.assert_allclose(result.x, [2.1 / 1.1, 0.0, 0.6 / 1.1], atol=1e-6)


def test_lasso_solution_passes_kkt(rng):
    X = rng.standard_normal((60, 8))
    y = X[:, 0] * 2.0 - X[:, 3] + rng.normal(0.0, 0.5, 60)
    f = _least_squares(X, y)
    penalty = PenaltyConfig(0.1, 0.1)
    result = fista_minimize(f, penalty, np.zeros(8))
    assert result.converged
    assert kkt_violation(f.gradient(result.x), result.x, penalty) < 1e-4
    assert np.all(np.diff(result.trace) <= 1e-12 * np.abs(result.trace[:-1]))


def test_huge_penalty_zeroes_everything(rng):
    X = rng.standard_normal((40, 5))
    f = _least_squares(X, rng.standard_normal(40))
    result = fista_minimize(f, PenaltyConfig(1e4, 0.1), rng.standard_normal(5))
    assert np.all(result.x == 0.0)


def test_lipschitz_of_diagonal_quadratic():
    H = np.diag([1.0, 4.0, 9.0])
    f = SmoothObjective(lambda x: 0.5 * float(x @ H @ x), lambda x: H @ x, 3)
    assert estimate_lipschitz(f, np.zeros(3)) == pytest.approx(9.0, rel=1e-3)


def test_non_finite_objective_names_the_iterate():
    f = SmoothObjective(lambda x: float("nan"), lambda x: np.zeros_like(x), 2)
    with pytest.raises(NumericalError, match="iterate 0"):
        fista_minimize(f, PenaltyConfig(0.1), np.zeros(2))


def test_kkt_flags_a_wrong_point():
    penalty = PenaltyConfig(1.0, 0.1)
    # zero is optimal only when |gradient| <= l1
    assert kkt_violation(np.array([0.5]), np.array([0.0]), penalty) == 0.0
    assert kkt_violation(np.array([2.0]), np.array([0.0]), penalty) == pytest.approx(1.1)
