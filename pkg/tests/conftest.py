import numpy as np
import pytest

from hawkes_cumulants.model import HawkesModel, spectral_radius

ACCEPTANCE_LINES: list[str] = []


def random_stable_model(rng: np.random.Generator, d_max: int = 5, rho_range=(0.1, 0.8), density: float = 0.7):
    """Exponential-kernel model with a random sparsity pattern rescaled to a target spectral radius."""
    while True:
        d = int(rng.integers(1, d_max + 1))
        alpha = rng.uniform(0.05, 1.0, (d, d)) * (rng.random((d, d)) < density)
        rho = spectral_radius(alpha)
        if rho > 0:
            break
    alpha *= rng.uniform(*rho_range) / rho
    beta = rng.uniform(0.5, 3.0, (d, d))
    mu = rng.uniform(0.2, 2.0, d)
    return HawkesModel.exponential(mu, alpha, beta)


@pytest.fixture
def scalar_model():
    return HawkesModel.exponential([1.0], [[0.5]], [[1.0]])


@pytest.fixture
def d2_model():
    return HawkesModel.exponential([0.5, 0.8], [[0.3, 0.2], [0.4, 0.1]], [[1.0, 2.0], [0.7, 1.5]])


@pytest.fixture
def poisson_model():
    return HawkesModel.poisson([1.0, 2.0, 0.5])


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
