"""Primal recovery from the dual solution by inf-Legendre transform.

The primal value function is V(t, x) = inf_{y > 0} { W(t, y) + x y }, and
because W is convex with W_y < 0 < W_yy the transform is classical:

    V_x(t, x)  = y*(x)            where W_y(t, y*) = -x,
    V_xx(t, x) = -1 / W_yy(t, y*),
    V_t(t, x)  = W_t(t, y*).

The optimal feedback maps follow from the Hamiltonian maximizers:
consumption solves dU1/dc (t, c, x) = V_x, and the risky amount is
-b V_x / (sigma^2 V_xx) (the argmax of U1 + (b pi - c) y + sigma^2 pi^2 Q / 2
over pi; this reproduces the Merton fraction b / (sigma^2 (1-p)) for power
utility).

Discrete realization: the transform is evaluated over the dual y-grid with
the linear-time monotone merge plus local quadratic interpolation around
the argmin; W_y is inverted through a monotone piecewise-cubic (PCHIP)
interpolant in log-log coordinates, which preserves the signs of V_x and
V_xx.  The wealth grid is geometric over the dual gradient range shrunk 5%
(in log) per side, so the inversion never leaves the resolved range.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable

import numpy as np
from scipy.interpolate import PchipInterpolator

from .errors import (
    ArgminAtBoundary,
    DegenerateCurvature,
    NegativeGapBeyondTolerance,
    OutOfRange,
    PrimalError,
)
from .dual_solver import DualSolution
from .model import InadaCase, MarketModel, UtilityModel
from .transforms import discrete_inf_conjugate, discrete_sup_conjugate, optimal_c, refine_extremum

__all__ = [
    "PrimalSolution",
    "legendre_min",
    "recover_derivatives",
    "consumption_feedback",
    "portfolio_feedback",
    "recover",
    "primal_hjb_residual",
    "weak_duality_gap",
    "sup_transform_slice",
    "check_primal_invariants",
]

CURVATURE_FLOOR = 1e-12
GRID_SHRINK = 0.05


@dataclass
class PrimalSolution:
    """Grid sampling of V, its derivatives and the optimal feedback maps."""

    x: np.ndarray                 # geometric wealth grid
    t: np.ndarray
    V: np.ndarray                 # (n_t + 1, n_x)
    V_x: np.ndarray
    V_xx: np.ndarray
    V_t: np.ndarray
    C_feedback: np.ndarray        # consumption rate
    Pi_feedback: np.ndarray       # risky amount
    duality_gap: np.ndarray       # discrete min of W + xy minus V, >= 0
    dual: DualSolution
    argmin_at_boundary: int = 0   # count of (t, x) evaluations flagged


# ---------------------------------------------------------------------------
# per-slice primitives
# ---------------------------------------------------------------------------

def _slice_conjugate(dual: DualSolution, n: int, xs: np.ndarray):
    """(values, refined, boundary_mask) of min_j { W[n,j] + x y_j } over the grid."""
    y = dual.y
    W = dual.W[n]
    vals, idx = discrete_inf_conjugate(y, W, xs)
    inner = (idx > 0) & (idx < len(y) - 1)
    refined = vals.copy()
    if np.any(inner):
        ii = idx[inner]
        xi = xs[inner]
        ref, _ = refine_extremum(
            W[ii - 1] + xi * y[ii - 1], W[ii] + xi * y[ii], W[ii + 1] + xi * y[ii + 1],
            minimum=True)
        refined[inner] = ref
    return vals, refined, ~inner


def legendre_min(dual: DualSolution, t_n: int, x) -> float | np.ndarray:
    """V(t_n, x) = min over the y-grid of W + x y, quadratically refined.

    Raises ArgminAtBoundary when the discrete argmin sits on the grid edge,
    i.e. x lies outside the wealth range [-W_y(y_max), -W_y(y_min)] resolved
    by the dual solution.
    """
    xs = np.atleast_1d(np.asarray(x, dtype=float))
    order = np.argsort(xs)
    _, refined, at_edge = _slice_conjugate(dual, t_n, xs[order])
    if np.any(at_edge):
        bad = xs[order][at_edge][0]
        raise ArgminAtBoundary(
            "argmin on the grid edge; x outside the resolved wealth range",
            point=(t_n, float(bad)))
    out = np.empty_like(xs)
    out[order] = refined
    return out if np.ndim(x) else float(out[0])


def legendre_min_dense(dual: DualSolution, t_n: int, x: float) -> float:
    """min_y (W + x y) with a dense local PCHIP refinement around the argmin.

    Accuracy O(dxi^4) against the continuous conjugate of the grid data;
    used where a scalar value must beat the quadratic refinement (fixed
    points, finite-difference self-consistency checks).  A local cubic
    spline is used rather than a monotone interpolant: PCHIP flattens
    derivatives at data extrema and would collapse onto the discrete min.
    """
    from scipy.interpolate import CubicSpline

    y = dual.y
    W = dual.W[t_n]
    j = int(np.argmin(W + x * y))
    lo, hi = max(j - 3, 0), min(j + 4, len(y))
    if hi - lo < 4:
        return float(W[j] + x * y[j])
    xi = dual.grid.xi[lo:hi]
    sp = CubicSpline(xi, W[lo:hi] + x * np.exp(xi))
    xs = np.linspace(xi[0], xi[-1], 2001)
    return float(np.min(sp(xs)))


def _slice_inverter(dual: DualSolution, n: int):
    """Monotone interpolants for the slice: x -> (xi*, W_yy*, W_t*).

    Built on interior nodes in log-log coordinates; -W_y is strictly
    decreasing in y so log(-W_y) is strictly decreasing in xi.
    """
    sl = slice(1, dual.grid.n_y - 1)
    xi = dual.grid.xi[sl]
    g = -dual.W_y[n][sl]
    wyy = dual.W_yy[n][sl]
    if np.any(g <= 0) or np.any(wyy <= 0):
        raise OutOfRange("slice gradient degenerate; cannot invert W_y", point=(n,))
    lg = np.log(g)[::-1]          # ascending
    xi_r = xi[::-1]
    # guard: strictly increasing abscissa for PCHIP
    if np.any(np.diff(lg) <= 0):
        keep = np.concatenate([[True], np.diff(lg) > 0])
        lg, xi_r = lg[keep], xi_r[keep]
    inv = PchipInterpolator(lg, xi_r, extrapolate=False)
    lwyy = PchipInterpolator(xi, np.log(wyy), extrapolate=False)
    wt = PchipInterpolator(xi, dual.W_t[n][sl], extrapolate=False)
    lo, hi = float(np.exp(lg[0])), float(np.exp(lg[-1]))
    return inv, lwyy, wt, (lo, hi)


def recover_derivatives(dual: DualSolution, t_n: int, x):
    """(V_x, V_xx, V_t) at slice t_n via monotone inversion of W_y.

    Requires -x strictly inside the range of W_y on the interior grid;
    raises OutOfRange otherwise (the caller must widen the dual grid).
    """
    xs = np.atleast_1d(np.asarray(x, dtype=float))
    inv, lwyy, wt, (lo, hi) = _slice_inverter(dual, t_n)
    if np.any((xs <= lo) | (xs >= hi)):
        raise OutOfRange("x beyond the dual gradient range", point=(t_n, float(xs[np.argmax((xs <= lo) | (xs >= hi))])))
    xi_star = inv(np.log(xs))
    v_x = np.exp(xi_star)
    v_xx = -1.0 / np.exp(lwyy(xi_star))
    v_t = wt(xi_star)
    if np.ndim(x):
        return v_x, v_xx, v_t
    return float(v_x[0]), float(v_xx[0]), float(v_t[0])


def consumption_feedback(utility: UtilityModel, dual: DualSolution, t_n: int, x) -> float:
    """C(t, x): solve dU1/dc = V_x(t, x); zero at x = 0 and without consumption."""
    if np.ndim(x) == 0 and x == 0.0:
        return 0.0
    if utility.inada_case is InadaCase.NO_CONSUMPTION:
        return 0.0 if np.ndim(x) == 0 else np.zeros_like(np.asarray(x, dtype=float))
    v_x, _, _ = recover_derivatives(dual, t_n, x)
    t = float(dual.t[t_n])
    if np.ndim(x) == 0:
        return optimal_c(utility, t, float(v_x), float(x))
    return np.asarray([optimal_c(utility, t, float(v), float(xx)) for v, xx in zip(v_x, np.atleast_1d(x))])


def portfolio_feedback(market: MarketModel, dual: DualSolution, t_n: int, x) -> float:
    """Pi(t, x) = -b V_x / (sigma^2 V_xx); zero at x = 0."""
    if np.ndim(x) == 0 and x == 0.0:
        return 0.0
    v_x, v_xx, _ = recover_derivatives(dual, t_n, x)
    if np.any(np.abs(v_xx) < CURVATURE_FLOOR):
        raise DegenerateCurvature("V_xx below curvature floor", point=(t_n,))
    t = float(dual.t[t_n])
    b = float(market.drift(t))
    s = float(market.vol(t))
    return -b * v_x / (s * s * v_xx)


# ---------------------------------------------------------------------------
# full recovery
# ---------------------------------------------------------------------------

def _gradient_range(dual: DualSolution) -> tuple[float, float]:
    """Intersection over non-degenerate slices of the interior -W_y range."""
    sl = slice(1, dual.grid.n_y - 1)
    lo, hi = 0.0, np.inf
    found = False
    for n in range(dual.grid.n_t + 1):
        g = -dual.W_y[n][sl]
        if np.max(g, initial=0.0) <= 1e-12:
            continue      # degenerate slice (e.g. zero terminal data)
        found = True
        lo = max(lo, float(np.min(g)))
        hi = min(hi, float(np.max(g)))
    if not found or not (0 < lo < hi):
        raise PrimalError("dual gradient range is empty; nothing to recover")
    return lo, hi


def recover(
    dual: DualSolution,
    utility: UtilityModel,
    market: MarketModel,
    n_x: int = 400,
    x_bounds: tuple[float, float] | None = None,
) -> PrimalSolution:
    """Build the full PrimalSolution on a geometric wealth grid.

    The wealth grid spans the dual gradient range shrunk ``GRID_SHRINK`` of
    its log-width per side, so the W_y inversion stays interior.  The
    terminal row carries the boundary data V(T, .) = U2 exactly; rows
    before T come from the refined discrete transform.
    """
    if x_bounds is None:
        glo, ghi = _gradient_range(dual)
        span = np.log(ghi) - np.log(glo)
        x_lo = np.exp(np.log(glo) + GRID_SHRINK * span)
        x_hi = np.exp(np.log(ghi) - GRID_SHRINK * span)
    else:
        x_lo, x_hi = x_bounds
    xs = np.geomspace(x_lo, x_hi, n_x)

    n_t = dual.grid.n_t
    shape = (n_t + 1, n_x)
    V = np.empty(shape)
    V_x = np.empty(shape)
    V_xx = np.empty(shape)
    V_t = np.empty(shape)
    C = np.empty(shape)
    Pi = np.empty(shape)
    gap = np.empty(shape)
    flagged = 0

    p = utility.p
    for n in range(n_t + 1):
        t = float(dual.t[n])
        terminal = n == n_t
        degenerate = bool(np.max(-dual.W_y[n][1:-1], initial=0.0) <= 1e-12)
        if terminal or degenerate:
            # boundary data: V(T, .) = U2; derivative rows from U2 itself
            V[n] = np.asarray(utility.U2(xs), dtype=float)
            V_x[n] = np.asarray(utility.u2_prime(xs), dtype=float)
            with np.errstate(divide="ignore", invalid="ignore"):
                h = 1e-4 * xs
                V_xx[n] = (np.asarray(utility.U2(xs + h), dtype=float)
                           - 2.0 * V[n] + np.asarray(utility.U2(xs - h), dtype=float)) / (h * h)
            V_t[n] = 0.0
            discrete, _, _ = _slice_conjugate(dual, n, xs)
            gap[n] = discrete - V[n]
        else:
            discrete, refined, at_edge = _slice_conjugate(dual, n, xs)
            flagged += int(np.sum(at_edge))
            V[n] = refined
            gap[n] = discrete - refined
            vx, vxx, vt = recover_derivatives(dual, n, xs)
            V_x[n], V_xx[n], V_t[n] = vx, vxx, vt
        # feedback maps from the recovered derivatives
        if utility.inada_case is InadaCase.NO_CONSUMPTION:
            C[n] = 0.0
        elif utility.power is not None:
            a = float(utility.power.a_c(t))
            if a > 0:
                with np.errstate(divide="ignore", over="ignore"):
                    C[n] = np.where(V_x[n] > 0,
                                    np.power(np.where(V_x[n] > 0, V_x[n], 1.0) / a,
                                             -1.0 / (1.0 - p)),
                                    0.0)
            else:
                C[n] = 0.0
        else:
            C[n] = np.asarray([optimal_c(utility, t, float(v), float(xx))
                               for v, xx in zip(V_x[n], xs)])
        b = float(market.drift(t))
        s = float(market.vol(t))
        with np.errstate(divide="ignore", invalid="ignore"):
            Pi[n] = np.where(np.abs(V_xx[n]) >= CURVATURE_FLOOR,
                             -b * V_x[n] / (s * s * V_xx[n]), 0.0)

    # one-sided V_t at the terminal row for completeness
    V_t[n_t] = (V[n_t] - V[n_t - 1]) / (dual.t[n_t] - dual.t[n_t - 1])

    return PrimalSolution(x=xs, t=dual.t.copy(), V=V, V_x=V_x, V_xx=V_xx, V_t=V_t,
                          C_feedback=C, Pi_feedback=Pi, duality_gap=gap, dual=dual,
                          argmin_at_boundary=flagged)


# ---------------------------------------------------------------------------
# diagnostics
# ---------------------------------------------------------------------------

def primal_hjb_residual(primal: PrimalSolution, market: MarketModel,
                        utility: UtilityModel, bundle=None) -> dict:
    """Residual of -V_t - U1*(t, V_x, x) + (b^2/2sigma^2) V_x^2 / V_xx.

    Evaluated at interior nodes; returns max and L2 norms of the residual
    normalized by 1 + |V_t|.
    """
    from .transforms import build_bundle

    if bundle is None:
        bundle = build_bundle(utility)
    n_t = len(primal.t) - 1
    worst = 0.0
    sq = 0.0
    count = 0
    for n in range(1, n_t):
        t = float(primal.t[n])
        lam = float(market.lam(t))
        vx = primal.V_x[n][1:-1]
        vxx = primal.V_xx[n][1:-1]
        vt = primal.V_t[n][1:-1]
        x = primal.x[1:-1]
        u1s = bundle.source(t, vx, x)
        r = (-vt - u1s + lam * vx * vx / vxx) / (1.0 + np.abs(vt))
        worst = max(worst, float(np.max(np.abs(r))))
        sq += float(np.sum(r * r))
        count += r.size
    return {"max": worst, "l2": float(np.sqrt(sq / max(count, 1)))}


def weak_duality_gap(primal: PrimalSolution, dual: DualSolution, t_n: int, x,
                     tol: float = 1e-8) -> float | np.ndarray:
    """min_j { W(t_n, y_j) + x y_j } - V(t_n, x); nonnegative up to ``tol``.

    A negative value beyond tolerance signals an inconsistency between the
    dual solve and the recovery and raises NegativeGapBeyondTolerance.
    """
    xs = np.atleast_1d(np.asarray(x, dtype=float))
    if np.any((xs < primal.x[0]) | (xs > primal.x[-1])):
        raise PrimalError("weak_duality_gap: x outside the primal grid range")
    order = np.argsort(xs)
    discrete, _, _ = _slice_conjugate(dual, t_n, xs[order])
    out = np.empty_like(xs)
    out[order] = discrete
    # log-linear interpolation of V; the chord of a concave function sits
    # below it, so interpolation can only push the gap upward
    v = np.interp(np.log(xs), np.log(primal.x), primal.V[t_n])
    g = out - v
    if np.any(g < -tol):
        raise NegativeGapBeyondTolerance(
            "recovered V exceeds the discrete dual envelope",
            point=(t_n, float(xs[np.argmin(g)])))
    return g if np.ndim(x) else float(g[0])


def sup_transform_slice(primal: PrimalSolution, t_n: int, ys: np.ndarray) -> np.ndarray:
    """sup over the x-grid of V(t_n, x) - x y, refined; involution test helper."""
    ys = np.asarray(ys, dtype=float)
    order = np.argsort(ys)
    vals, idx = discrete_sup_conjugate(primal.x, primal.V[t_n], ys[order])
    inner = (idx > 0) & (idx < len(primal.x) - 1)
    if np.any(inner):
        ii = idx[inner]
        yy = ys[order][inner]
        ref, _ = refine_extremum(
            primal.V[t_n][ii - 1] - primal.x[ii - 1] * yy,
            primal.V[t_n][ii] - primal.x[ii] * yy,
            primal.V[t_n][ii + 1] - primal.x[ii + 1] * yy,
            minimum=False)
        vals[inner] = ref
    out = np.empty_like(ys)
    out[order] = vals
    return out


def check_primal_invariants(primal: PrimalSolution, utility: UtilityModel) -> dict[str, bool]:
    """Membership checks for the verification class: boundary data, growth,
    sign conditions and discrete concavity/monotonicity in x."""
    res: dict[str, bool] = {}
    xs = primal.x
    n_t = len(primal.t) - 1
    interior = range(n_t)         # strictly before T

    u2 = np.asarray(utility.U2(xs), dtype=float)
    res["terminal_data"] = bool(np.allclose(primal.V[n_t], u2, rtol=1e-9, atol=1e-12))

    # v(t, 0) = 0 extrapolates as V -> 0 for x -> 0: check smallest node is small
    res["zero_boundary_trend"] = bool(np.all(primal.V[:, 0] <= primal.V[:, -1]))

    res["V_nonnegative"] = bool(np.all(primal.V >= -1e-12))
    k0 = float(np.max(primal.V / (1.0 + xs[None, :] ** utility.p)))
    res["power_growth"] = bool(np.all(primal.V <= 1.01 * k0 * (1.0 + xs[None, :] ** utility.p) + 1e-12))

    res["V_x_positive"] = all(bool(np.all(primal.V_x[n] > 0)) for n in interior)
    res["V_xx_negative"] = all(bool(np.all(primal.V_xx[n] < 0)) for n in interior)

    dV = np.diff(primal.V, axis=1)
    res["monotone_in_x"] = bool(np.all(dV >= -1e-10 * (1.0 + np.abs(primal.V[:, 1:]))))
    # concavity on the geometric grid: chord slopes nonincreasing
    slopes = dV / np.diff(xs)[None, :]
    res["concave_in_x"] = bool(np.all(np.diff(slopes, axis=1)
                                      <= 1e-8 * (1.0 + np.abs(slopes[:, :-1]))))

    res["feedback_nonnegative"] = bool(np.all(primal.C_feedback >= 0))
    return res
