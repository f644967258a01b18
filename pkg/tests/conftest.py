import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from voltscale import sram

settings.register_profile("default", deadline=None,
                          suppress_health_check=[HealthCheck.too_slow])
settings.load_profile("default")

# criterion lines collected by test_acceptance and echoed in the summary
ACCEPTANCE_LINES = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)


@pytest.fixture
def small_geometry():
    # 4 x 160 x 16 = 10240 cells, enough for the population properties
    return sram.SramGeometry(4, 160, 16)


@pytest.fixture
def normal_dist():
    return sram.VminDistribution(0.45, 0.025)


@pytest.fixture
def rng():
    return np.random.default_rng(1234)
