import numpy as np
import pytest

from stonewalk.stats import SeedPlan


@pytest.fixture
def plan():
    return SeedPlan(20240611)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)
