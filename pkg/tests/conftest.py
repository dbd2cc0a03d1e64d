import sys
from pathlib import Path

import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from curveflow.geometry import make_curve

sys.path.insert(0, str(Path(__file__).parent))

settings.register_profile("default", deadline=None, max_examples=25, derandomize=True,
                          suppress_health_check=[HealthCheck.too_slow])
settings.load_profile("default")

ELLIPSE_2_1 = {"type": "ellipse", "a": 2.0, "b": 1.0}
FLOWER = {"type": "polar", "modes": [[3, 0.3, 0.0]]}


@pytest.fixture(scope="session")
def unit_circle():
    return make_curve({"type": "circle"})


@pytest.fixture(scope="session")
def ellipse():
    return make_curve(ELLIPSE_2_1)


@pytest.fixture(scope="session")
def ellipse512():
    return make_curve({**ELLIPSE_2_1, "N": 512})


@pytest.fixture(scope="session")
def flower():
    return make_curve(FLOWER)


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


def pytest_terminal_summary(terminalreporter):
    mod = sys.modules.get("test_acceptance")
    lines = getattr(mod, "CRITERIA_LINES", None)
    if not lines:
        return
    terminalreporter.section("acceptance criteria")
    for key in sorted(lines, key=lambda k: (int(k.rstrip("b")), k)):
        terminalreporter.write_line(lines[key])
