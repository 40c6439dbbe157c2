import numpy as np
import pytest

from crpstail import FORECASTERS, simulate


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


@pytest.fixture(scope="session")
def ge_small():
    """GE batches for all four forecasters, shared observation stream."""
    return {name: simulate("ge", name, 20_000, seed=3) for name in FORECASTERS}


@pytest.fixture(scope="session")
def nn_small():
    return {name: simulate("nn", name, 20_000, seed=3) for name in FORECASTERS}
