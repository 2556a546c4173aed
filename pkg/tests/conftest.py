import numpy as np
import pytest

from crossworld import Dataset, LearnerParams, gen_synthetic


@pytest.fixture
def fast_params() -> LearnerParams:
    return LearnerParams(trees=60, min_leaf=5, seed=3)


@pytest.fixture
def synthetic_data() -> Dataset:
    return gen_synthetic(600, 1, 0.5, seed=11)


def make_dataset(
    n: int = 400, seed: int = 0, effect: float = 2.0, noise: float = 1.0
) -> Dataset:
    """Linear outcomes with a constant effect and independent noise."""
    rng = np.random.default_rng(seed)
    X = rng.uniform(-1.0, 1.0, size=(n, 1))
    T = (rng.random(n) < 0.5).astype(int)
    Y0 = X[:, 0] + noise * rng.standard_normal(n)
    Y1 = X[:, 0] + effect + noise * rng.standard_normal(n)
    return Dataset(
        X=X,
        T=T,
        Y=np.where(T == 1, Y1, Y0),
        Y0=Y0,
        Y1=Y1,
        tau=np.full(n, effect),
    )
