import numpy as np
import pytest

from trajcluster import from_matrix, simulate_pap


@pytest.fixture(scope="session")
def pap():
    """Default simulated dataset (301 x 13, seed 1) and its truth."""
    return simulate_pap(301, 13, seed=1)


@pytest.fixture(scope="session")
def pap_ds(pap):
    return pap[0]


@pytest.fixture(scope="session")
def small_pap():
    ds, _ = simulate_pap(60, 8, seed=3)
    return ds


def planted_bundles(n=40, j=6, gap=20.0, noise=1.0, seed=0):
    """Two bundles of flat trajectories ``gap`` noise SDs apart."""
    rng = np.random.default_rng(seed)
    half = n // 2
    levels = np.r_[np.zeros(half), np.full(n - half, gap * noise)]
    y = levels[:, None] + rng.normal(0.0, noise, (n, j))
    labels = np.r_[np.zeros(half, int), np.ones(n - half, int)]
    return from_matrix(y, np.arange(1, j + 1)), labels
