import numpy as np
import pytest
from hypothesis import settings

settings.register_profile("default", deadline=None, max_examples=60)
settings.load_profile("default")


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def random_complex(rng, shape, sparsity=0.0):
    M = rng.standard_normal(shape) + 1j * rng.standard_normal(shape)
    if sparsity:
        M[rng.random(shape) < sparsity] = 0
    return M
