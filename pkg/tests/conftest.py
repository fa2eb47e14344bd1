import os
import sys

import pytest
from hypothesis import HealthCheck, settings

sys.path.insert(0, os.path.dirname(__file__))

settings.register_profile("default", deadline=None, max_examples=60,
                          suppress_health_check=[HealthCheck.too_slow])
settings.load_profile(os.environ.get("HYPOTHESIS_PROFILE", "default"))

from receval import shapes  # noqa: E402
from receval.bvh import build_bvh  # noqa: E402


@pytest.fixture(scope="session")
def phantom():
    return shapes.torso_phantom()


@pytest.fixture(scope="session")
def phantom_bvh(phantom):
    return build_bvh(phantom)


def pytest_terminal_summary(terminalreporter):
    from acceptance_log import RESULTS

    if not RESULTS:
        return
    terminalreporter.section("acceptance criteria")
    for k in sorted(RESULTS):
        terminalreporter.write_line(RESULTS[k])
