import numpy as np
import pytest

from slsync.fock import DensityMatrix, FockSpace


def random_density(rng: np.random.Generator, dim: int) -> DensityMatrix:
    """Random full-rank valid state via a Wishart-style construction."""
    m = rng.normal(size=(dim, dim)) + 1j * rng.normal(size=(dim, dim))
    rho = m @ m.conj().T
    rho /= np.trace(rho).real
    return DensityMatrix(FockSpace(dim), rho)


@pytest.fixture
def rng():
    return np.random.default_rng(1234)
