import numpy as np
import pytest

from droopmpc.model import ForecastBounds, InitialConditions, MgParams


def random_instance(rng, J, pv_spread=0.15, dem_spread=0.07, params=None):
    """Default parameters with a random forecast box and initial state."""
    P = (params or MgParams()).with_(horizon_j=J)
    pv = rng.uniform(0.0, 3.5, J)
    dem = rng.uniform(0.8, 2.0, J)
    bounds = ForecastBounds(pv * (1 - pv_spread), np.minimum(pv * (1 + pv_spread), P.p_pv_max),
                            dem * (1 - dem_spread), dem * (1 + dem_spread))
    init = InitialConditions(x0=float(rng.uniform(0.3, 2.5)),
                             delta_f_prev=int(rng.integers(0, 2)))
    return P, bounds, init


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


ACCEPTANCE_LINES = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES, key=lambda s: int(s.split()[0][1:])):
            terminalreporter.write_line(line)
