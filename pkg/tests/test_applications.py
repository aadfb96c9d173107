import math

import numpy as np
import pytest

from dualhjb import (
    ExponentialArrival,
    IlliquidParams,
    LogGrid,
    MarketModel,
    PowerRunning,
    SimConfig,
    illiquid_reduction,
    kv_fixed_point,
    liquidation_value,
    power_power_utility,
    random_horizon_equivalence,
    random_horizon_transform,
    solve_dual,
    validate_model,
)
from dualhjb import merton
from dualhjb.applications import exponential_horizon, RandomHorizonSpec
from dualhjb.errors import ApplicationError, DiscountTooSmall, NegativeWeight, QuadratureUnstable


# ---------------------------------------------------------------------------
# random-horizon transform
# ---------------------------------------------------------------------------

def test_transform_identity_when_horizon_never_hits():
    spec = RandomHorizonSpec(
        G1=PowerRunning(1.0, 0.5), G2=PowerRunning(1.0, 0.5),
        F=lambda t: 0.0, f=lambda t: 0.0, T=1.0)
    u = random_horizon_transform(spec)
    ts = np.linspace(0.0, 0.99, 7)
    for t in ts:
        assert float(u.power.a_c(t)) == 1.0
        assert float(u.power.a_x(t)) == 0.0
    assert u.power.a_T == 1.0          # U2 = G2(T, .)


def test_transform_exponential_weights():
    spec = exponential_horizon(0.5, 1.0, PowerRunning(1.0, 0.5), PowerRunning(1.0, 0.5))
    u = random_horizon_transform(spec)
    assert float(u.power.a_c(1.0)) == pytest.approx(0.60653, abs=1e-5)
    assert float(u.power.a_x(1.0)) == pytest.approx(0.30327, abs=1e-5)


def test_transform_fast_horizon_kills_terminal_weight():
    spec = exponential_horizon(1e3, 1.0, PowerRunning(1.0, 0.5), PowerRunning(1.0, 0.5))
    u = random_horizon_transform(spec)
    assert u.power.a_T < 1e-100
    # running utility dominated by the wealth term at interior times
    assert float(u.power.a_x(0.001)) > float(u.power.a_c(0.001))


def test_transform_validates_on_composite(market):
    spec = exponential_horizon(0.5, 1.0, PowerRunning(1.0, 0.5), PowerRunning(1.0, 0.5))
    u = random_horizon_transform(spec)
    assert validate_model(market, u).passed


def test_negative_density_rejected():
    spec = RandomHorizonSpec(
        G1=PowerRunning(1.0, 0.5), G2=PowerRunning(1.0, 0.5),
        F=lambda t: 0.0, f=lambda t: -0.1, T=1.0)
    with pytest.raises(NegativeWeight):
        random_horizon_transform(spec)


def test_inconsistent_density_rejected():
    spec = RandomHorizonSpec(
        G1=PowerRunning(1.0, 0.5), G2=PowerRunning(1.0, 0.5),
        F=lambda t: 1.0 - math.exp(-0.5 * t), f=lambda t: 0.5, T=1.0)
    with pytest.raises(ApplicationError):
        spec.validate()


def test_separable_transform_carries_offset():
    # wealth term positive at the origin: the composite is renormalized and
    # the deterministic offset must equal the shifted mass
    lam, T = 1.0, 2.0
    base = 0.3

    def G2(t, x):
        return base + np.sqrt(np.asarray(x, dtype=float))

    spec = exponential_horizon(lam, T, PowerRunning(1.0, 0.5), G2)
    u = random_horizon_transform(spec, K=10.0)
    assert abs(float(u.U1(0.3, 0.0, 0.0))) < 1e-12
    assert abs(float(u.U2(0.0))) < 1e-12
    # C(0) = int_0^T f(s) G2(s,0) ds + (1 - F(T)) G2(T, 0)
    expected = base * (1.0 - math.exp(-lam * T)) + math.exp(-lam * T) * base
    assert float(u.value_offset(0.0)) == pytest.approx(expected, rel=1e-6)
    assert float(u.value_offset(T)) == pytest.approx(math.exp(-lam * T) * base, rel=1e-6)


# ---------------------------------------------------------------------------
# illiquid reduction arithmetic
# ---------------------------------------------------------------------------

def test_reduction_decouples_at_zero_correlation():
    prm = IlliquidParams(b_L=0.2, sigma_L=0.3, b_I=0.1, sigma_I=0.4, rho=0.0, p=0.5, beta=1.0)
    red = illiquid_reduction(prm)
    assert red.k_yp == 0.0
    assert red.b_eff == prm.b_L
    assert red.beta_eff == prm.beta


def test_reduction_spec_numbers():
    prm = IlliquidParams(b_L=0.2, sigma_L=0.3, b_I=0.1, sigma_I=0.4, rho=0.5, p=0.5, beta=1.0)
    red = illiquid_reduction(prm)
    assert red.k_yp == pytest.approx(0.061667, abs=1e-6)
    assert red.b_eff == pytest.approx(0.17, abs=1e-12)


def test_reduction_small_p_limit():
    prm = IlliquidParams(b_L=0.2, sigma_L=0.3, b_I=0.1, sigma_I=0.4, rho=0.5,
                         p=1e-8, beta=1.0)
    red = illiquid_reduction(prm)
    assert abs(red.k_yp) < 1e-8
    assert red.b_eff == pytest.approx(0.2 - 0.5 * 0.4 * 0.3, rel=1e-6)


def test_reduction_random_sweep_machine_precision():
    rng = np.random.default_rng(11)
    for _ in range(100):
        p = rng.uniform(0.05, 0.95)
        rho = rng.uniform(-0.95, 0.95)
        bl, sl, bi, si = rng.uniform(0.05, 0.6, 4)
        k_ind = p * rho * si * bl / sl - p * (1 - p) * (rho * si) ** 2 / 2.0
        beta = abs(k_ind) + rng.uniform(0.1, 1.0)
        try:
            red = illiquid_reduction(IlliquidParams(
                b_L=bl, sigma_L=sl, b_I=bi, sigma_I=si, rho=rho, p=p, beta=beta))
        except ApplicationError:
            continue          # b_eff <= 0 draws are rejected by construction
        assert red.k_yp == pytest.approx(k_ind, rel=1e-14, abs=1e-16)
        assert red.b_eff == pytest.approx(bl - rho * si * sl * (1 - p), rel=1e-14)


def test_discount_too_small():
    with pytest.raises(DiscountTooSmall):
        illiquid_reduction(IlliquidParams(
            b_L=0.5, sigma_L=0.2, b_I=0.1, sigma_I=0.6, rho=0.9, p=0.8, beta=0.1))


# ---------------------------------------------------------------------------
# liquidation operator
# ---------------------------------------------------------------------------

PRM = IlliquidParams(b_L=0.2, sigma_L=0.3, b_I=0.15, sigma_I=0.4, rho=0.5, p=0.5, beta=1.0)


def test_liquidation_pure_liquid():
    assert liquidation_value(PRM, 2.0, 0.7, 3.0, 0.0) == pytest.approx(
        2.0 * math.sqrt(3.0) / 0.5, rel=1e-14)


def test_liquidation_lognormal_moment():
    red = illiquid_reduction(PRM)
    t, y = 0.7, 2.0
    val = liquidation_value(PRM, 1.0, t, 0.0, y, check=True)
    m = red.log_mean_rate * t
    v = red.log_var_rate * t
    exact = (1.0 / 0.5) * math.sqrt(y) * math.exp(0.5 * m + 0.125 * v)
    assert val == pytest.approx(exact, rel=1e-12)


def test_liquidation_degenerate_correlation():
    prm = IlliquidParams(b_L=0.2, sigma_L=0.3, b_I=0.15, sigma_I=0.4,
                         rho=1.0 - 1e-9, p=0.5, beta=1.0)
    red = illiquid_reduction(prm)
    val = liquidation_value(prm, 1.0, 2.0, 1.0, 1.0)
    exact = (1.0 / 0.5) * math.sqrt(1.0 + math.exp(red.log_mean_rate * 2.0))
    assert val == pytest.approx(exact, rel=1e-6)


def test_liquidation_monotonicity():
    lo = liquidation_value(PRM, 1.0, 0.5, 1.0, 1.0)
    assert liquidation_value(PRM, 1.0, 0.5, 2.0, 1.0) > lo
    assert liquidation_value(PRM, 1.0, 0.5, 1.0, 2.0) > lo
    assert liquidation_value(PRM, 2.0, 0.5, 1.0, 1.0) > lo


def sample_J_from_asset_dynamics(prm, t, n, rng):
    """J = alpha0 I_t / Y_t built from the exact solutions of the displayed
    asset dynamics on the two Brownian factors, independent of the derived
    lognormal parameters used by the quadrature."""
    W = math.sqrt(t) * rng.standard_normal(n)
    Bm = math.sqrt(t) * rng.standard_normal(n)
    I = np.exp((prm.b_I - 0.5 * prm.sigma_I ** 2) * t
               + prm.sigma_I * (prm.rho * W + math.sqrt(1 - prm.rho ** 2) * Bm))
    Y_over_alpha = np.exp((prm.rho * prm.b_L * prm.sigma_I / prm.sigma_L
                           - 0.5 * prm.rho ** 2 * prm.sigma_I ** 2) * t
                          + prm.rho * prm.sigma_I * W)
    return I / Y_over_alpha


def test_liquidation_vs_monte_carlo_of_asset_dynamics():
    t, x, y, K = 1.3, 0.8, 1.7, 1.4
    val = liquidation_value(PRM, K, t, x, y)
    rng = np.random.default_rng(7)
    J = sample_J_from_asset_dynamics(PRM, t, 200_000, rng)
    samples = (K / PRM.p) * np.sqrt(x + y * J)
    mc = samples.mean()
    se = samples.std(ddof=1) / math.sqrt(len(samples))
    assert abs(val - mc) <= 3.0 * se


def test_quadrature_instability_flagged():
    # tiny order on a heavy-tailed case moves visibly on refinement
    prm = IlliquidParams(b_L=0.2, sigma_L=0.3, b_I=0.15, sigma_I=2.5, rho=0.0,
                         p=0.9, beta=50.0)
    with pytest.raises(QuadratureUnstable):
        liquidation_value(prm, 1.0, 5.0, 0.01, 1.0, quad_order=4, check=True)


# ---------------------------------------------------------------------------
# K_V fixed point
# ---------------------------------------------------------------------------

def test_kv_alpha0_zero_matches_liquid_constant():
    prm = IlliquidParams(b_L=0.2, sigma_L=0.3, b_I=0.15, sigma_I=0.4, rho=0.0,
                         p=0.5, beta=1.0, arrival=ExponentialArrival(1.0))
    res = kv_fixed_point(prm, force_alpha0=0.0, tol=1e-4,
                         n_y=120, n_t_per_unit=150, trunc_target=1e-3)
    K_lo = merton.infinite_horizon_constant(1.0, 0.5, 0.2, 0.3)
    assert res.converged
    assert res.K_V == pytest.approx(K_lo, rel=5e-3)


def test_kv_monotone_in_illiquid_drift():
    # a better illiquid asset cannot hurt: K_V nondecreasing in b_I, with
    # grids, truncation and quadrature shared between the paired runs
    common = dict(sigma_L=0.3, sigma_I=0.4, rho=0.0, p=0.5, beta=2.0,
                  arrival=ExponentialArrival(1.0))
    settings = dict(tol=2e-3, n_y=80, n_t_per_unit=120, quad_order=24,
                    alpha_grid=5, golden_iters=3, richardson=False,
                    trunc_target=1e-3, max_iter=25)
    res_lo = kv_fixed_point(IlliquidParams(b_L=0.2, b_I=0.05, **common), **settings)
    res_hi = kv_fixed_point(IlliquidParams(b_L=0.2, b_I=0.30, **common), **settings)
    assert res_hi.K_V >= res_lo.K_V - 1e-6
    assert res_hi.trace[-1]["alpha0"] >= res_lo.trace[-1]["alpha0"] - 1e-6


def test_random_horizon_composite_solves_against_ode(market):
    # the transform produces time-varying power weights; the solved dual
    # must match the scalar coefficient ODE with the same weights
    lam, p = 0.5, 0.5
    spec = exponential_horizon(lam, 1.0, PowerRunning(1.0, p), PowerRunning(1.0, p))
    composite = random_horizon_transform(spec)
    grid = LogGrid(1e-3, 1e3, 160, 200, 1.0)
    sol = solve_dual(market, composite, grid)
    ts, phi = merton.power_ode_coefficient(
        p, 0.3, 0.5, 1.0,
        a_c=lambda t: math.exp(-lam * t),
        a_x=lambda t: lam * math.exp(-lam * t),
        a_T=math.exp(-lam * 1.0),
        t_eval=sol.t)
    Wex = phi[:, None] * sol.y[None, :] ** -1.0
    mask = np.ix_(sol.t <= 0.9, (sol.y >= 0.2) & (sol.y <= 5.0))
    rel = np.abs(sol.W[mask] - Wex[mask]) / np.abs(Wex[mask])
    assert rel.max() < 5e-3


# ---------------------------------------------------------------------------
# random-horizon equivalence (shared noise)
# ---------------------------------------------------------------------------

def test_equivalence_direct_vs_transformed(market):
    p = 0.5
    spec = exponential_horizon(0.5, 1.0, PowerRunning(1.0, p), PowerRunning(1.0, p))
    D = lambda t: merton.merton_D(t, p, 0.3, 0.5, 1.0, 1.0)
    frac = merton.risky_fraction(p, 0.3, 0.5)
    policy = lambda t, X: (X / D(t), frac * X)
    out = random_horizon_equivalence(spec, policy, market, 1.0,
                                     SimConfig(n_paths=4000, dt_sim=1.0 / 200, seed=12))
    assert out["within_2se"], (out["difference"], out["combined_se"])
