import numpy as np
import pytest


@pytest.fixture
def rng():
    return np.random.default_rng(0)


def seeded_batch(seed, shape, low=-1.0, high=1.0):
    return np.random.default_rng(seed).uniform(low, high, shape)


def unit_rows_np(m):
    return m / np.linalg.norm(m, axis=1, keepdims=True)
