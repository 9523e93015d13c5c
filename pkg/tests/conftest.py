import numpy as np
import pytest

from sps_radial.energy import ModelParams
from sps_radial.hartree import hartree_potential
from sps_radial.verification import Fixtures


@pytest.fixture(scope="session")
def fx():
    return Fixtures(seed=0)


@pytest.fixture(scope="session")
def params():
    return ModelParams()


@pytest.fixture(scope="session")
def unit30(fx):
    """Unit-multiplier ground state on r_max = 30, h = 0.01."""
    return fx.unit30


@pytest.fixture(scope="session")
def unit_potential(unit30):
    return hartree_potential(unit30.P).V


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


ACCEPTANCE_LINES = []


@pytest.fixture
def report_line():
    return ACCEPTANCE_LINES.append


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
