import numpy as np
import pytest


@pytest.fixture(scope="session")
def rng():
    return np.random.default_rng(20240131)


def ar1_path(rho: float, n: int, rng: np.random.Generator) -> np.ndarray:
    """Stationary AR(1) sample path with unit innovation variance."""
    e = rng.standard_normal(n)
    x = np.empty(n)
    x[0] = e[0] / np.sqrt(1.0 - rho * rho)
    for t in range(1, n):
        x[t] = rho * x[t - 1] + e[t]
    return x
