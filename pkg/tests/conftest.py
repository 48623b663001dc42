import os
import sys

import pytest

sys.path.insert(0, os.path.dirname(__file__))

from hdvplan.road import RoadGeometry, build_road, roundabout_road  # noqa: E402
from hdvplan.vehicle import CITY_BUS, TRACTOR_TRAILER  # noqa: E402

_ACCEPTANCE = {}


def pytest_runtest_logreport(report):
    if "test_acceptance.py" not in report.nodeid:
        return
    if report.when == "call" or (report.when == "setup" and report.outcome != "passed"):
        label = None
        for key, value in report.user_properties:
            if key == "criterion":
                label = value
        if label is not None:
            _ACCEPTANCE[label] = report.outcome


def pytest_terminal_summary(terminalreporter):
    if not _ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for label in sorted(_ACCEPTANCE, key=lambda t: int(t.split(".")[0])):
        verdict = "PASS" if _ACCEPTANCE[label] == "passed" else "FAIL"
        terminalreporter.write_line(f"{verdict}  {label}")


@pytest.fixture(scope="session")
def bus():
    return CITY_BUS


@pytest.fixture(scope="session")
def tt():
    return TRACTOR_TRAILER


@pytest.fixture(scope="session")
def straight_road():
    return build_road(lambda s: 0.0, 60.0, 0.5)


@pytest.fixture(scope="session")
def straight_geometry(straight_road):
    return RoadGeometry(straight_road)


@pytest.fixture(scope="session")
def circle_geometry():
    """Counter-clockwise circle of radius 8 m, one and a half laps."""
    return RoadGeometry(build_road(lambda s: 1.0 / 8.0, 75.0, 0.5, 3.5, 3.5))


@pytest.fixture(scope="session")
def roundabout():
    return roundabout_road()


@pytest.fixture(scope="session")
def roundabout_geometry(roundabout):
    return RoadGeometry(roundabout)
