import numpy as np
import pytest

import fracbloch as fb
from fracbloch.lattice import PlaneWaveBasis


@pytest.fixture(scope="session")
def basis():
    return fb.make_honeycomb_basis()


@pytest.fixture(scope="session")
def V():
    return fb.builtin_V()


@pytest.fixture(scope="session")
def W():
    return fb.builtin_W()


@pytest.fixture(scope="session")
def dirac_cache(basis, V, W):
    """Dirac-point data per sigma at N=16, shared across test modules."""
    cache = {}

    def get(sigma, with_cone=False, gap_eps=None):
        key = (sigma, with_cone, tuple(gap_eps) if gap_eps else None)
        if key not in cache:
            cache[key] = fb.analyze_dirac_point(
                basis, V, W, sigma, N=16, with_cone=with_cone,
                gap_eps=gap_eps)
        return cache[key]

    return get


@pytest.fixture(scope="session")
def pw16(basis):
    return PlaneWaveBasis(basis, 16)


@pytest.fixture(scope="session")
def pw12(basis):
    return PlaneWaveBasis(basis, 12)


@pytest.fixture(scope="session")
def rng():
    return np.random.default_rng(20240811)
