import numpy as np
import pytest

from amsdigital import BsParams, HestonParams, MultiGbmParams

# one line per acceptance criterion, printed at the end of the session
ACCEPTANCE_LINES = {}


@pytest.fixture
def bs():
    return BsParams(r=0.03, sigma=0.2, s0=1.0)


@pytest.fixture
def heston():
    return HestonParams(r=0.03, kappa=2.0, theta=0.04, psi_vov=0.3, rho=-0.5, v0=0.04)


@pytest.fixture
def multi():
    return MultiGbmParams.equicorrelated(0.03, 0.2, 1.0, 0.2)


@pytest.fixture
def gen():
    return np.random.default_rng(12345)


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE_LINES:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(ACCEPTANCE_LINES):
        terminalreporter.write_line(ACCEPTANCE_LINES[n])
