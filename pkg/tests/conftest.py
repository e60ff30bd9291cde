import numpy as np
import pytest

from fracsemi.barriers import solve_sublinear, subsolution, subsolution_threshold
from fracsemi.fraclap import assemble
from fracsemi.mesh import make_grid
from fracsemi.spectral import principal_eigenpair


@pytest.fixture(scope="session")
def op512():
    return assemble(make_grid(-1.0, 1.0, 512), 0.25)


@pytest.fixture(scope="session")
def eig512(op512):
    return principal_eigenpair(op512)


@pytest.fixture(scope="session")
def z1_512(op512):
    return solve_sublinear(op512, 1.0, 0.5, tol=1e-12)


@pytest.fixture(scope="session")
def threshold512(op512, eig512, z1_512):
    """Subsolution threshold for s = 0.25, q = 0.5, alpha1 = 1.5 on (-1, 1)."""
    return subsolution_threshold(op512, eig512, 0.5, 1.5, z1=z1_512)


@pytest.fixture(scope="session")
def lam2(threshold512):
    return 2.0 * threshold512.lambda_star


@pytest.fixture(scope="session")
def under512(eig512, lam2):
    return subsolution(eig512, lam2, 1.5, 0.5)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)
