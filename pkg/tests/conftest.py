import numpy as np
import pytest

from nvencode.array_model import NVArray, NVCenter, NVSite, generate_array, site_label
from nvencode.config import validate_config
from nvencode.sequence_engine import ExperimentConfig

NOISELESS = float("inf")


@pytest.fixture(scope="session")
def preset():
    return validate_config(None)


@pytest.fixture(scope="session")
def preset_array(preset):
    return preset.build_array()


@pytest.fixture
def quiet_config():
    return ExperimentConfig(photons_per_point=NOISELESS)


def make_point_array(positions=(0.0, 96.0, 192.0, 288.0), nvs_per_site=3):
    """Sites with every selected NV on the site centre and equal weight per site."""
    sites = []
    for i, x in enumerate(positions):
        c = (x, 0.0, -20.0)
        sites.append(NVSite(c, 60.0, tuple(NVCenter(c) for _ in range(nvs_per_site)), site_label(i)))
    pitch = positions[1] - positions[0] if len(positions) > 1 else 100.0
    mid = (positions[0] + positions[-1]) / 2
    return NVArray(tuple(sites), pitch, lab_offset=(-mid, 0.0, 0.0))


@pytest.fixture(scope="session")
def point_array():
    """Four sites at 0/96/192/288 nm."""
    return make_point_array()


def rel(a, b):
    return np.abs(np.asarray(a) - np.asarray(b)) / np.maximum(np.abs(np.asarray(b)), 1e-300)


ACCEPTANCE_KEY = pytest.StashKey[list]()


def pytest_configure(config):
    config.stash[ACCEPTANCE_KEY] = []


@pytest.fixture
def criterion(request, capsys):
    """Record one acceptance line; prints it live and again in the summary."""
    def record(number, passed: bool, detail: str):
        line = f"CRITERION {number}: {'PASS' if passed else 'FAIL'}  {detail}"
        request.config.stash[ACCEPTANCE_KEY].append(line)
        with capsys.disabled():
            print("\n" + line)
        return passed
    return record


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    lines = config.stash.get(ACCEPTANCE_KEY, [])
    if lines:
        terminalreporter.section("acceptance criteria")
        for line in lines:
            terminalreporter.write_line(line)
