import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from crgraph.measures import Kernel, TypeLaw
from crgraph.process import ConnectionSchedule

settings.register_profile(
    "default",
    max_examples=60,
    deadline=None,
    suppress_health_check=[HealthCheck.too_slow],
)
settings.load_profile("default")


@pytest.fixture
def uniform2():
    """k = 2, uniform types, unit kernel: m = 1/4 everywhere, total mass 1."""
    return Kernel(np.ones((2, 2))), TypeLaw([0.5, 0.5])


@pytest.fixture
def near_critical():
    return ConnectionSchedule.near_critical()


def pytest_terminal_summary(terminalreporter):
    from . import test_acceptance

    if test_acceptance.LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(test_acceptance.LINES):
            terminalreporter.write_line(line)
