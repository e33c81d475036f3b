import numpy as np
import pytest

from gevforest.data import BlockMaxSample, Dataset


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def toy_dataset(responses, p=2, seed=0):
    """Dataset with the given responses and arbitrary finite covariates."""
    responses = np.asarray(responses, dtype=float)
    n = responses.size
    feats = np.random.default_rng(seed).uniform(-1, 1, (n, p))
    return Dataset(feats, responses, tuple(f"x{j + 1}" for j in range(p)))


def toy_blocks(X, y):
    X = np.asarray(X, dtype=float)
    y = np.asarray(y, dtype=float)
    return BlockMaxSample(
        features=X,
        maxima=y,
        block_size=1,
        source_rows=np.arange(len(y)),
        feature_names=tuple(f"x{j + 1}" for j in range(X.shape[1])),
    )
