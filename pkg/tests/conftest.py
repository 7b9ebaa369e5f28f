import warnings

import numpy as np
import pytest

from rotorfield.charge import ChargeProfile
from rotorfield.grid import SpectralGrid


@pytest.fixture(scope="session")
def ball():
    return ChargeProfile("uniform-ball", 1.0, 1.0, 1.0)


@pytest.fixture(scope="session")
def bump():
    return ChargeProfile("smooth-bump", 1.0, 1.0, 1.0)


@pytest.fixture(scope="session")
def small_grid():
    # 8 cells across the unit support, box 16 > 4 R
    return SpectralGrid(32, 8.0)


@pytest.fixture(scope="session")
def grid48():
    return SpectralGrid(48, 24.0)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


@pytest.fixture(autouse=True)
def _quiet_resolution():
    from rotorfield.soliton import ResolutionWarning
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", ResolutionWarning)
        yield


ACCEPTANCE_KEY = pytest.StashKey[list]()


def pytest_configure(config):
    config.stash[ACCEPTANCE_KEY] = []


@pytest.fixture
def acceptance(request):
    """acceptance(n, ok, detail): record one pass/fail line for the summary."""
    lines = request.config.stash[ACCEPTANCE_KEY]

    def record(n, ok, detail):
        line = f"criterion {n:2d}: {'PASS' if ok else 'FAIL'}  {detail}"
        lines.append((n, line))
        return ok

    return record


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    lines = config.stash.get(ACCEPTANCE_KEY, [])
    if lines:
        terminalreporter.section("acceptance criteria")
        for _, line in sorted(lines):
            terminalreporter.write_line(line)
