import numpy as np
import pytest

from mjcm.model import ModelParams
from mjcm.operators import HilbertDims


def make_params(m=1, n_max=6, e1=0.3, e2=None, omega=0.9, gamma=0.7 + 0.4j, **kw):
    if e2 is None:
        e2 = e1 + m * omega + 0.25
    return ModelParams(e1, e2, omega, gamma, m, HilbertDims(n_max), **kw)


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)


def random_hermitian(rng, d):
    A = rng.normal(size=(d, d)) + 1j * rng.normal(size=(d, d))
    return 0.5 * (A + A.conj().T)
