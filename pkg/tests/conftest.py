import pytest

from pymodaq_plugins_blob.blobcore import SchemeParams, initialise
from pymodaq_plugins_blob.utils import derive_seed

ROOT_SEED = bytes(range(16))


def seed(*labels) -> bytes:
    return derive_seed(ROOT_SEED, *labels)


@pytest.fixture
def small_params():
    """4096 one-bit entries, 256 tracing positions, 8 users, U/P_FP = 2^30"""
    return SchemeParams.create(N=4096, w=1, ell=128, t=256, k0=96, gamma=0.1, U=8, c0=2,
                               p_fp=2. ** -27)


@pytest.fixture
def multi_params():
    return SchemeParams.create(N=4096, w=1, ell=128, t=256, k0=96, gamma=0.1, U=8, c0=2,
                               p_fp=2. ** -27, mode='multi')


@pytest.fixture
def deployment(small_params):
    return initialise(small_params, seed('deployment'))


@pytest.fixture
def multi_deployment(multi_params):
    return initialise(multi_params, seed('multi-deployment'))
