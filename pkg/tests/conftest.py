import os

import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from qdtune.simcore import DeviceParams

settings.register_profile("default", deadline=None, suppress_health_check=[HealthCheck.too_slow])
settings.load_profile("default")

ACCEPTANCE_LINES = []


def pytest_addoption(parser):
    parser.addoption("--acceptance", action="store", default=os.environ.get("QDTUNE_ACCEPTANCE", "fast"),
                     choices=("off", "fast", "full"),
                     help="acceptance gate: off, fast (quick criteria only) or full (includes training runs)")


def pytest_configure(config):
    config.addinivalue_line("markers", "acceptance: acceptance criterion check")


def pytest_collection_modifyitems(config, items):
    gate = config.getoption("--acceptance")
    skip_all = pytest.mark.skip(reason="acceptance gate is off")
    skip_slow = pytest.mark.skip(reason="needs --acceptance full (or QDTUNE_ACCEPTANCE=full)")
    for item in items:
        if "acceptance" not in item.keywords:
            continue
        if gate == "off":
            item.add_marker(skip_all)
        elif gate == "fast" and "slow" in item.keywords:
            item.add_marker(skip_slow)


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES, key=lambda s: int(s.split()[1].rstrip(":"))):
            terminalreporter.write_line(line)


@pytest.fixture
def device():
    return DeviceParams()


@pytest.fixture
def symmetric_device():
    return DeviceParams(
        charging_energy_left=2.0, charging_energy_right=2.0, mutual_charging_energy=0.5,
        lever_arm_matrix=((0.1, 0.02), (0.02, 0.1)),
    )


@pytest.fixture
def rng():
    return np.random.default_rng(1234)
