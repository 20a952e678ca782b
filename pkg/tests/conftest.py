import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from segre.normed_space import SpaceSpec

settings.register_profile(
    "default", max_examples=40, deadline=None, suppress_health_check=[HealthCheck.too_slow]
)
settings.load_profile("default")


def pytest_configure(config):
    config.addinivalue_line("markers", "slow: long-running acceptance checks")


@pytest.fixture
def l2():
    return SpaceSpec.lp(2, 2.0)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)
