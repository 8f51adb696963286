import numpy as np
import pytest

from kfattack.fusion import fuse_identical_h
from kfattack.kalman import steady_state
from kfattack.model import Sensor, SensorSuite, TrackingParams, build_dwna_model

P0 = np.diag([100.0, 100.0])


@pytest.fixture(scope="session")
def dwna():
    return build_dwna_model(TrackingParams(t=1.0, sigma_v2=0.25))


@pytest.fixture(scope="session")
def pv_sensor():
    return Sensor.position_velocity(3.0, 4.0)


@pytest.fixture(scope="session")
def pos_suite():
    return SensorSuite((Sensor.position(3.0), Sensor.position(4.0)))


@pytest.fixture(scope="session")
def pv_suite():
    return SensorSuite((Sensor.position_velocity(3.0, 4.0), Sensor.position_velocity(4.0, 5.0)))


@pytest.fixture(scope="session")
def pv_steady(dwna, pv_sensor):
    return steady_state(dwna, pv_sensor.h, pv_sensor.r, P0).require_steady()


@pytest.fixture(scope="session")
def pos_fused(pos_suite):
    return fuse_identical_h(pos_suite)


@pytest.fixture(scope="session")
def pos_steady(dwna, pos_fused):
    return steady_state(dwna, pos_fused.h_e, pos_fused.r_e, P0).require_steady()


@pytest.fixture(scope="session")
def pv2_fused(pv_suite):
    return fuse_identical_h(pv_suite)


@pytest.fixture(scope="session")
def pv2_steady(dwna, pv2_fused):
    return steady_state(dwna, pv2_fused.h_e, pv2_fused.r_e, P0).require_steady()


_ACCEPTANCE_LINES = []


@pytest.fixture
def acceptance():
    """Record one PASS/FAIL line per criterion; lines are echoed in the terminal summary."""

    def record(number, passed, detail):
        line = f"{'PASS' if passed else 'FAIL'}  criterion {number:>2}: {detail}"
        print(line)
        _ACCEPTANCE_LINES.append(line)
        return passed

    return record


def pytest_terminal_summary(terminalreporter):
    if _ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(_ACCEPTANCE_LINES, key=lambda s: int(s.split("criterion")[1].split(":")[0])):
            terminalreporter.write_line(line)
