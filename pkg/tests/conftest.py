import numpy as np
import pytest

from andersonlab import ModelSpec, SingleSiteProfile, SiteDistribution


@pytest.fixture
def uniform_dist():
    return SiteDistribution.uniform(1.0, 1.0)


@pytest.fixture
def lattice_small(uniform_dist):
    """d=1, L=16 lattice workhorse."""
    return ModelSpec.lattice(1, 16, uniform_dist)


@pytest.fixture
def lattice_2d(uniform_dist):
    return ModelSpec.lattice(2, 6, uniform_dist)


@pytest.fixture
def free_chain():
    """Zero coupling: deterministic free Laplacian ensemble."""
    return ModelSpec.lattice(1, 16, SiteDistribution.uniform(1.0, 0.0))


@pytest.fixture
def continuum_small():
    prof = SingleSiteProfile(0.5, 1.0)
    return ModelSpec.continuum(1, 6, 0.5, SiteDistribution.uniform(1.0, 1.0), prof)


def free_lattice_eigs(d: int, side: int) -> np.ndarray:
    """Fourier eigenvalues of the free lattice Laplacian on the d-torus."""
    k = np.arange(side)
    one = 2.0 - 2.0 * np.cos(2.0 * np.pi * k / side)
    total = np.zeros(1)
    for _ in range(d):
        total = (total[:, None] + one[None, :]).ravel()
    return np.sort(total)
