import numpy as np
import pytest

from dualhjb import (
    MarketModel,
    constant_curve,
    piecewise_linear_curve,
    power_power_utility,
    validate_model,
)
from dualhjb.errors import ModelError, NonPositiveVolatility
from dualhjb.model import default_probe_grid


def probe(T=1.0, n=10):
    return default_probe_grid(T, n)


def test_sqrt_family_passes_validation():
    # U1 = 2 sqrt(c) + 2 sqrt(x), U2 = 2 sqrt(x) is power_power with p = 0.5
    market = MarketModel(b=0.3, sigma=0.5, T=1.0)
    utility = power_power_utility(0.5, a_c=1.0, a_x=1.0, a_T=1.0, K=4.0)
    report = validate_model(market, utility, probe())
    assert report.passed, str(report)


def test_zero_utility_is_admissible():
    market = MarketModel(b=0.3, sigma=0.5, T=1.0)
    utility = power_power_utility(0.5, a_c=0.0, a_x=0.0, a_T=0.0)
    report = validate_model(market, utility, probe())
    assert report.passed, str(report)


def test_vanishing_volatility_fails_at_horizon():
    market = MarketModel(b=0.3, sigma=piecewise_linear_curve([0.0, 1.0], [1.0, 0.0]), T=1.0)
    utility = power_power_utility(0.5)
    report = validate_model(market, utility, probe())
    assert not report.passed
    bad = [c for c in report.checks if c.name == "positive_volatility"][0]
    assert not bad.passed
    assert bad.point == (1.0,)
    with pytest.raises(NonPositiveVolatility):
        report.raise_if_failed()


def test_validation_is_deterministic():
    market = MarketModel(b=0.3, sigma=0.5, T=1.0)
    utility = power_power_utility(0.5, a_c=1.0, a_x=1.0, a_T=1.0)
    g = probe()
    r1 = validate_model(market, utility, g)
    r2 = validate_model(market, utility, g)
    assert str(r1) == str(r2)
    assert [c.passed for c in r1.checks] == [c.passed for c in r2.checks]


def test_sharpe_quantities_pointwise():
    b = piecewise_linear_curve([0.0, 1.0], [0.2, 0.4])
    s = piecewise_linear_curve([0.0, 1.0], [0.5, 0.3])
    market = MarketModel(b=b, sigma=s, T=1.0)
    ts = np.linspace(0.0, 1.0, 37)
    np.testing.assert_allclose(market.theta(ts), b(ts) / s(ts), rtol=1e-15)
    np.testing.assert_allclose(market.lam(ts), b(ts) ** 2 / (2.0 * s(ts) ** 2), rtol=1e-14)


def test_concavity_violation_detected():
    market = MarketModel(b=0.3, sigma=0.5, T=1.0)
    good = power_power_utility(0.5)
    # convex running utility disguised behind the same interface
    bad = type(good)(
        U1=lambda t, c, x: np.asarray(c, dtype=float) ** 2,
        U2=good.U2, p=0.5, K=1e9, inada_case=good.inada_case,
        growth_case=frozenset({"running"}),
    )
    report = validate_model(market, bad, probe())
    names = {c.name for c in report.failures}
    assert "concavity_U1" in names or "growth_bound" in names


def test_growth_bound_violation_names_point():
    market = MarketModel(b=0.3, sigma=0.5, T=1.0)
    utility = power_power_utility(0.5, a_c=1.0, a_x=1.0, a_T=1.0, K=1e-6)
    report = validate_model(market, utility, probe())
    bad = [c for c in report.checks if c.name == "growth_bound"][0]
    assert not bad.passed
    assert bad.point is not None


def test_market_requires_positive_horizon():
    with pytest.raises(ModelError):
        MarketModel(b=0.3, sigma=0.5, T=-1.0)


def test_constant_curve_marker():
    c = constant_curve(0.3)
    assert c.constant_value == 0.3
    assert c(0.7) == 0.3
    np.testing.assert_array_equal(c(np.zeros(3)), np.full(3, 0.3))


def test_inada_flags():
    from dualhjb import InadaCase

    u = power_power_utility(0.5, a_c=1.0)
    assert u.inada_case is InadaCase.INADA
    u0 = power_power_utility(0.5, a_c=0.0, a_x=1.0, a_T=0.0)
    assert u0.inada_case is InadaCase.NO_CONSUMPTION
    assert u0.U1_c is None


def test_growth_case_flags():
    assert "running" in power_power_utility(0.5, a_c=1.0).growth_case
    assert "terminal" in power_power_utility(0.5, a_c=0.0, a_T=2.0).growth_case
