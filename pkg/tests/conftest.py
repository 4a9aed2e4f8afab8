import numpy as np
import pytest

from amocbox import model


@pytest.fixture(scope="session")
def dim():
    return model.DimensionalParams()


@pytest.fixture(scope="session")
def params(dim):
    return model.build_nondim(dim, mu=-2.1e-3, eta=-3.99)


@pytest.fixture()
def rng():
    return np.random.default_rng(20260810)


def random_states(rng, n):
    """States drawn from the attractor-relevant box."""
    lo = np.array([-2.0, -6.0, -6.0, -2.0])
    hi = np.array([8.0, 8.0, 8.0, 8.0])
    return lo + (hi - lo) * rng.random((n, 4))
