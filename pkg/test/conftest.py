import numpy as np
import pytest

from src.synth import SynthConfig, synth_generate


@pytest.fixture(scope="session")
def small_cohort():
    """Mixture cohort small enough for repeated fits."""
    return synth_generate(SynthConfig(n=160, d=6, sparsity=2, seed=1))


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def central_difference(f, x, h=1e-6):
    grad = np.zeros_like(x)
    for j in range(len(x)):
        step = np.zeros_like(x)
        step[j] = h
        grad[j] = (f(x + step) - f(x - step)) / (2.0 * h)
    return grad
