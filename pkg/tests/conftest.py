import math

import pytest

from spinopto.model import SystemParams
from spinopto.steady import operating_point_drive

TWO_PI = 2 * math.pi

# acceptance lines collected by tests/test_acceptance.py
ACCEPTANCE_LINES = []


def fig2_params(detuning=0.0) -> SystemParams:
    """Bistability parameters in units where kappa = 1."""
    return SystemParams(omega_L=0.033, omega_cpl=1.25e-3, kappa=1.0, nmax_plus=15,
                        nmax_minus=15, S=1e4, delta_p_plus=detuning, delta_p_minus=detuning)


def fig3_base() -> SystemParams:
    return SystemParams(omega_L=TWO_PI * 200e3, omega_cpl=-TWO_PI * 2.3e3,
                        kappa=TWO_PI * 1.8e6, S=5000)


def fig3_operating_point(n_plus=10.0, x_eff=0.37, branch="high"):
    base = fig3_base()
    return operating_point_drive(base, n_plus, x_eff * base.kappa, branch)


@pytest.fixture
def fig2():
    return fig2_params


@pytest.fixture
def fig3():
    return fig3_operating_point


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
