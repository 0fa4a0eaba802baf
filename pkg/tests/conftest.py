import numpy as np
import pytest


@pytest.fixture(scope="session")
def cache_dir(tmp_path_factory):
    """One operator-table cache for the whole run, so repeated plans load."""
    return str(tmp_path_factory.mktemp("op_cache"))


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


def unit_cloud(n, seed=0, ncols=1):
    """Seeded uniform points in [0,1)^3 with Gaussian weights."""
    gen = np.random.default_rng(seed)
    points = gen.random((n, 3))
    weights = gen.standard_normal((n, ncols))
    return points, weights
