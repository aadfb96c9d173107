import numpy as np
import pytest

from dualhjb import (
    LogGrid,
    MarketModel,
    build_bundle,
    check_primal_invariants,
    consumption_feedback,
    legendre_min,
    portfolio_feedback,
    power_power_utility,
    primal_hjb_residual,
    recover,
    recover_derivatives,
    solve_dual,
    weak_duality_gap,
)
from dualhjb import merton
from dualhjb.errors import ArgminAtBoundary, NegativeGapBeyondTolerance, OutOfRange
from dualhjb.primal import legendre_min_dense, sup_transform_slice


def test_legendre_min_terminal_sqrt(merton_dual):
    # W(T, y) = 1/y: min_y (1/y + 4y) = 4 at y = 1/2
    n = len(merton_dual.t) - 1
    assert legendre_min(merton_dual, n, 4.0) == pytest.approx(4.0, abs=1e-5)
    assert legendre_min_dense(merton_dual, n, 4.0) == pytest.approx(4.0, abs=1e-7)


def test_legendre_min_recovers_terminal_utility(merton_dual, merton_utility):
    n = len(merton_dual.t) - 1
    xs = np.geomspace(0.25, 4.0, 11)
    vals = legendre_min(merton_dual, n, xs)
    np.testing.assert_allclose(vals, merton_utility.U2(xs), rtol=1e-5)


def test_legendre_min_small_x_limit(merton_dual):
    # inf_y (W + x y) -> 0 as x -> 0+; evaluate at the smallest resolved x
    lo = -merton_dual.W_y[0][-2] * 1.5
    assert legendre_min(merton_dual, 0, lo) < 1e-2


def test_legendre_min_flags_boundary(merton_dual):
    beyond = -merton_dual.W_y[0][-2] * 0.5
    with pytest.raises(ArgminAtBoundary):
        legendre_min(merton_dual, 0, beyond)


def test_recover_derivatives_merton_terminal(merton_dual):
    # terminal slice W = 1/y: W_y = -1/y^2, so V_x(4) = sqrt(1/4) = 0.5
    n = len(merton_dual.t) - 1
    v_x, v_xx, _ = recover_derivatives(merton_dual, n, 4.0)
    assert v_x == pytest.approx(0.5, rel=2e-3)
    assert v_xx < 0


def test_recover_derivatives_out_of_range(merton_dual):
    with pytest.raises(OutOfRange):
        recover_derivatives(merton_dual, 0, 1e12)


def test_fd_consistency_of_gradient(merton_dual):
    # central differences of the dense transform against the W_y inversion
    for n in (0, 100):
        for x in (0.5, 1.0, 2.0):
            h = 0.02 * x
            fd = (legendre_min_dense(merton_dual, n, x + h)
                  - legendre_min_dense(merton_dual, n, x - h)) / (2 * h)
            v_x, _, _ = recover_derivatives(merton_dual, n, x)
            assert fd == pytest.approx(v_x, rel=1e-4)


def test_consumption_feedback_values(merton_dual, merton_utility):
    # p = 0.5: c* = V_x^{-2}
    n = 0
    v_x, _, _ = recover_derivatives(merton_dual, n, 1.0)
    c = consumption_feedback(merton_utility, merton_dual, n, 1.0)
    assert c == pytest.approx(v_x ** -2, rel=1e-10)
    assert consumption_feedback(merton_utility, merton_dual, n, 0.0) == 0.0
    u_nc = power_power_utility(0.5, a_c=0.0, a_x=1.0, a_T=1.0)
    assert consumption_feedback(u_nc, merton_dual, n, 1.0) == 0.0


def test_portfolio_feedback_merton_fraction(merton_dual, market):
    frac = merton.risky_fraction(0.5, 0.3, 0.5)
    for x in (0.5, 1.0, 2.0):
        pi = portfolio_feedback(market, merton_dual, 10, x)
        assert pi == pytest.approx(frac * x, rel=1e-3)
    assert portfolio_feedback(market, merton_dual, 10, 0.0) == 0.0


def test_portfolio_vanishes_with_drift(merton_utility):
    market0 = MarketModel(b=1e-9, sigma=0.5, T=1.0)
    grid = LogGrid(n_y=64, n_t=16, T=1.0)
    sol = solve_dual(market0, merton_utility, grid)
    pi = portfolio_feedback(market0, sol, 4, 1.0)
    assert abs(pi) < 1e-6


def test_recovered_value_against_oracle(merton_primal):
    Vex = merton.primal_value_V(merton_primal.t[:, None], merton_primal.x[None, :],
                                0.5, 0.3, 0.5, 1.0, 1.0)
    xm = (merton_primal.x >= 0.25) & (merton_primal.x <= 4.0)
    sub = np.ix_(merton_primal.t <= 1.0, xm)
    rel = np.abs(merton_primal.V[sub] - Vex[sub]) / np.abs(Vex[sub])
    assert rel.max() < 1e-2


def test_primal_invariants(merton_primal, wealth_primal, merton_utility, wealth_utility):
    inv1 = check_primal_invariants(merton_primal, merton_utility)
    assert all(inv1.values()), inv1
    inv2 = check_primal_invariants(wealth_primal, wealth_utility)
    assert all(inv2.values()), inv2


def test_hjb_residual_small_and_refining(market, merton_utility):
    res = {}
    for n_t in (50, 100):
        grid = LogGrid(y_min=1e-3, y_max=1e3, n_y=200, n_t=n_t, T=1.0)
        sol = solve_dual(market, merton_utility, grid)
        primal = recover(sol, merton_utility, market, n_x=200)
        res[n_t] = primal_hjb_residual(primal, market, merton_utility)["max"]
    assert res[100] < 1e-2
    order = np.log2(res[50] / res[100])
    assert order >= 0.8


def test_zero_problem_has_no_gradient_range(market):
    from dualhjb.errors import PrimalError

    u0 = power_power_utility(0.5, a_c=0.0, a_x=0.0, a_T=0.0)
    grid = LogGrid(n_y=64, n_t=16, T=1.0)
    sol = solve_dual(market, u0, grid)
    assert np.all(sol.W == 0.0)
    with pytest.raises(PrimalError):
        recover(sol, u0, market)


def test_duality_gap_bounds(merton_primal, merton_dual):
    xs = merton_primal.x[5:-5:37]
    for n in (0, 200, 399):
        g = weak_duality_gap(merton_primal, merton_dual, n, xs)
        assert np.all(g >= -1e-8)
        tol = merton_dual.grid.dxi ** 2 * (1.0 + np.abs(merton_primal.V[n][5:-5:37]))
        assert np.all(g <= tol)


def test_duality_gap_detects_injected_fault(merton_primal, merton_dual):
    import copy

    low = copy.copy(merton_primal)
    low.V = merton_primal.V - 0.1
    g = weak_duality_gap(low, merton_dual, 10, merton_primal.x[100])
    assert g == pytest.approx(0.1, abs=5e-3)

    high = copy.copy(merton_primal)
    high.V = merton_primal.V + 0.1
    with pytest.raises(NegativeGapBeyondTolerance):
        weak_duality_gap(high, merton_dual, 10, merton_primal.x[100])


def test_inada_marginal_blows_up_under_refinement(merton_dual):
    # V_x(t, x_min) = y*(x_min) grows without bound as x_min -> 0: pushing
    # the evaluation point toward zero must exceed any preset threshold
    vals = [recover_derivatives(merton_dual, 0, x)[0] for x in (1e-1, 1e-3, 1e-5)]
    assert vals[0] < vals[1] < vals[2]
    assert vals[2] > 100.0


def test_involution_recovers_dual(merton_primal, merton_dual):
    region = (merton_dual.y >= 0.2) & (merton_dual.y <= 5.0)
    ys = merton_dual.y[region]
    dlx = np.log(merton_primal.x[1] / merton_primal.x[0])
    for n in (0, 200):
        wt = sup_transform_slice(merton_primal, n, ys)
        tol = 2.0 * (merton_dual.grid.dxi ** 2 + dlx ** 2) * (1.0 + np.abs(merton_dual.W[n][region]))
        assert np.all(np.abs(wt - merton_dual.W[n][region]) <= tol)


def test_argmin_monotone_and_matches_gradient(merton_dual):
    from dualhjb.primal import _slice_conjugate

    xs = np.geomspace(0.3, 3.0, 21)
    _, _, _ = _slice_conjugate(merton_dual, 0, xs)
    vals, idx = __import__("dualhjb").discrete_inf_conjugate(
        merton_dual.y, merton_dual.W[0], xs)
    assert np.all(np.diff(idx) <= 0)
    v_x, _, _ = recover_derivatives(merton_dual, 0, xs)
    argmin_y = merton_dual.y[idx]
    np.testing.assert_allclose(argmin_y, v_x, rtol=merton_dual.grid.dxi)
