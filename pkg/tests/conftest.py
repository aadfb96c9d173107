import numpy as np
import pytest

from dualhjb import (
    LogGrid,
    MarketModel,
    power_power_utility,
    recover,
    solve_dual,
)

# Benchmark parameters shared across the suite: p = 0.5, b = 0.3, sigma = 0.5,
# T = 1.  The Merton case (a_x = 0) has closed forms; the wealth-utility case
# (a_x = 1) is cross-checked against the scalar coefficient ODE.
P = 0.5
B = 0.3
SIGMA = 0.5
T = 1.0


@pytest.fixture(scope="session")
def market():
    return MarketModel(b=B, sigma=SIGMA, T=T)


@pytest.fixture(scope="session")
def merton_utility():
    return power_power_utility(P, a_c=1.0, a_x=0.0, a_T=1.0)


@pytest.fixture(scope="session")
def merton_utility_a0():
    return power_power_utility(P, a_c=1.0, a_x=0.0, a_T=0.0)


@pytest.fixture(scope="session")
def wealth_utility():
    return power_power_utility(P, a_c=1.0, a_x=1.0, a_T=1.0)


@pytest.fixture(scope="session")
def grid():
    return LogGrid(y_min=1e-3, y_max=1e3, n_y=200, n_t=400, T=T)


@pytest.fixture(scope="session")
def merton_dual(market, merton_utility, grid):
    return solve_dual(market, merton_utility, grid)


@pytest.fixture(scope="session")
def merton_primal(merton_dual, merton_utility, market):
    return recover(merton_dual, merton_utility, market)


@pytest.fixture(scope="session")
def wealth_dual(market, wealth_utility, grid):
    return solve_dual(market, wealth_utility, grid)


@pytest.fixture(scope="session")
def wealth_primal(wealth_dual, wealth_utility, market):
    return recover(wealth_dual, wealth_utility, market)


def brute_force_sup(f, lo, hi, n=1_000_000):
    """Grid brute force for sup-type oracles (independent of the library path)."""
    xs = np.linspace(lo, hi, n)
    return float(np.max(f(xs)))
