import numpy as np
import pytest

from svcaft.model import SurvivalDataset
from svcaft.spatial import SpatialLayout, louisiana_layout


@pytest.fixture(scope="session")
def louisiana():
    return louisiana_layout()


def path_layout(n: int) -> SpatialLayout:
    W = np.zeros((n, n))
    for i in range(n - 1):
        W[i, i + 1] = W[i + 1, i] = 1.0
    cent = np.column_stack([np.arange(n, dtype=float), np.zeros(n)])
    return SpatialLayout(n, cent, W, [f"u{i}" for i in range(n)])


def random_layout(rng: np.random.Generator, n: int, density: float = 0.4) -> SpatialLayout:
    """Random graph guaranteed to have at least one edge."""
    A = np.triu(rng.random((n, n)) < density, 1).astype(float)
    A[0, 1] = 1.0
    W = A + A.T
    return SpatialLayout(n, rng.normal(size=(n, 2)), W)


def make_dataset(rng, n_units, m, beta, sigma=1.0, censor_rate=None):
    beta = np.atleast_2d(np.asarray(beta, float))
    p = beta.shape[1]
    unit = np.repeat(np.arange(n_units), m)
    X = np.column_stack([np.ones(unit.size), rng.normal(size=(unit.size, p - 1))])
    logT = np.einsum("ij,ij->i", X, beta[unit]) + sigma * rng.normal(size=unit.size)
    T = np.exp(logT)
    if censor_rate is None:
        return SurvivalDataset(unit, T, np.ones(unit.size, bool), X, n_units)
    C = rng.exponential(1.0 / censor_rate, size=unit.size)
    ev = T <= C
    return SurvivalDataset(unit, np.where(ev, T, C), ev, X, n_units)


def pytest_terminal_summary(terminalreporter):
    import sys
    mod = sys.modules.get("test_acceptance")
    results = getattr(mod, "RESULTS", None)
    if results:
        terminalreporter.section("acceptance criteria")
        for n in sorted(results):
            terminalreporter.write_line(results[n])
