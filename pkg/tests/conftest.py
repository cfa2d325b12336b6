import numpy as np
import pytest


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def random_commuting_family(rng, N, d, lo=0.5, hi=3.0):
    U, _ = np.linalg.qr(rng.normal(size=(d, d)))
    return [U @ np.diag(rng.uniform(lo, hi, d)) @ U.T for _ in range(N)]
