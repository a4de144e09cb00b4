import numpy as np
import pytest

from quasictrl import dual
from quasictrl import obstruction as ob
from quasictrl.numerics import Grid

XI = (0.25, 0.5, 0.75)
T_CERT = 1.0 / 32.0


@pytest.fixture(scope="session")
def sol():
    """Symmetric theta = 2 datum at the certified horizon."""
    return dual.build_dual(dual.DualData(XI, 2.0, T_CERT))


@pytest.fixture(scope="session")
def delta_cstar(sol):
    return dual.extract_delta(sol)[0], dual.U0_l2_bound(sol)


@pytest.fixture(scope="session")
def adversarial128(sol, delta_cstar):
    d, c = delta_cstar
    return ob.adversarial_h0(sol, d, c, Grid(128))


@pytest.fixture
def rng():
    return np.random.default_rng(12345)
