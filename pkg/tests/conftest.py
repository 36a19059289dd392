import numpy as np
import pytest

from upliftrl.data import Dataset


@pytest.fixture
def tiny_dataset():
    """3 samples, D=2, K=1, two responses."""
    return Dataset(
        features=np.array([[0.0, 1.0], [2.0, 3.0], [4.0, 5.0]]),
        actions=np.array([0, 1, 0]),
        propensities=np.array([0.5, 0.5, 0.5]),
        responses=np.array([[1.0, 0.0], [0.0, 1.0], [1.0, 1.0]]),
        num_actions=1,
    )


def random_dataset(n=40, d=3, k=2, seed=0, single_response=True):
    rng = np.random.default_rng(seed)
    r = 1 if single_response else 2
    return Dataset(
        features=rng.normal(size=(n, d)),
        actions=rng.integers(0, k + 1, n),
        propensities=rng.uniform(0.2, 1.0, n),
        responses=rng.normal(size=(n, r)),
        num_actions=k,
    )
