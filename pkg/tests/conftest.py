import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from nvgames.demand import MarginalSpec, normal_model

settings.register_profile("default", deadline=None, max_examples=60, suppress_health_check=[HealthCheck.too_slow])
settings.load_profile("default")


@pytest.fixture
def two_store_normal():
    return normal_model([100.0, 100.0], [10.0, 10.0])


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def single(kind, **params):
    from nvgames.demand import DemandModel

    return DemandModel((MarginalSpec(kind, params),))


def pytest_terminal_summary(terminalreporter):
    from test_acceptance import LINES

    if LINES:
        terminalreporter.section("acceptance criteria")
        for line in LINES:
            terminalreporter.write_line(line)
