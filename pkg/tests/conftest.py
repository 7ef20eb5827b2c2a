import numpy as np
import pytest

from bmselect.data import SSMRData
from bmselect.models import ModelConfig


def make_dataset(s=2, r=2, p=3, n=30, seed=0, n_controls=1, effect_scale=0.3):
    """Small random dataset with a genuine signal in every candidate column."""
    rng = np.random.default_rng(seed)
    ys, xs, cs = [], [], []
    sigmas = []
    for _ in range(s):
        x = rng.standard_normal((n, p))
        if n_controls > 1:
            c = np.column_stack([np.ones(n), rng.standard_normal((n, n_controls - 1))])
        else:
            c = np.ones((n, 1))
        a = rng.standard_normal((r, r))
        sigma = a @ a.T + 0.5 * np.eye(r)
        beta = rng.standard_normal((p, r)) * effect_scale
        bc = rng.standard_normal((n_controls, r))
        y = x @ beta + c @ bc + rng.multivariate_normal(np.zeros(r), sigma, size=n)
        ys.append(y)
        xs.append(x)
        cs.append(c)
        sigmas.append(sigma)
    return SSMRData.from_arrays(ys, xs, cs), sigmas


def null_dataset(s=1, r=2, p=3, n=40, seed=0):
    """Dataset with no candidate signal at all."""
    rng = np.random.default_rng(seed)
    ys, xs = [], []
    for _ in range(s):
        xs.append(rng.standard_normal((n, p)))
        ys.append(rng.standard_normal((n, r)))
    return SSMRData.from_arrays(ys, xs)


@pytest.fixture
def small_data():
    return make_dataset(s=2, r=2, p=3, n=30, seed=7, n_controls=2)


@pytest.fixture
def mvlr_data():
    return make_dataset(s=1, r=3, p=4, n=50, seed=3)


def full_model(data) -> ModelConfig:
    return ModelConfig(np.ones((data.p, data.s * data.r), dtype=np.uint8), data.s, data.r)
