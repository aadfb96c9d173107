"""Backward solver for the semilinear dual HJB equation.

The equation, posed for (t, y) in [0, T) x (0, inf), is

    -w_t - (b^2(t) / 2 sigma^2(t)) y^2 w_yy - U1*(t, y, -w_y) = 0,
    w(T, y) = tildeU2(y),

with w convex, strictly decreasing in y, blowing up at y -> 0+ and
decaying to 0 at y -> inf.  We solve it on a truncated log grid
xi = log y, where y^2 d_yy becomes d_xixi - d_xi with coefficients
constant per time slice: uniform nodes and well-conditioned tridiagonals.

Time stepping is implicit Euler in the diffusion plus a frozen-gradient
fixed point for the semilinear source.  Inside the iteration the gradient
argument -w_y is clamped into a band derived from the previous slice's
gradient range; this copies the localization device used to prove
regularity of the dual value function and doubles as a numerical
safeguard (at convergence the clamp is inactive at essentially all
interior nodes).  Implicit Euler is preferred over Crank-Nicolson to
preserve discrete monotonicity and convexity near the steep y -> 0 layer.

Boundary rows are Dirichlet: both tails are polynomial (growth
K_W (1 + y^{-q}) on the left, decay to 0 on the right, q = p/(1-p)), so
each is extrapolated by a one-parameter power-law fit on the nearest
interior nodes of the previously computed slice.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field
from typing import Callable

import numpy as np
from scipy.linalg import solve_banded

from .errors import (
    BoundaryLayerWarning,
    FixedPointDivergence,
    NonConvexSlice,
    SaturatedConjugate,
    SolverError,
)
from .model import MarketModel, UtilityModel, validate_model
from .transforms import ConjugateBundle, build_bundle

__all__ = [
    "LogGrid",
    "DualSolution",
    "StepInfo",
    "clamp_gradient",
    "terminal_slice",
    "boundary_values",
    "step_backward",
    "solve_dual",
    "check_dual_invariants",
]

FP_TOL = 1e-10
FP_MAX_ITER = 50
CLAMP_WIDEN = (0.5, 2.0)
FIT_WINDOW = 5
FIT_FLOOR = 1e-14          # below this the boundary fit degenerates to 0
CONVEXITY_TOL = 1e-8


@dataclass(frozen=True)
class LogGrid:
    """Uniform grid in xi = log y crossed with a uniform time grid on [0, T]."""

    y_min: float = 1e-3
    y_max: float = 1e3
    n_y: int = 200
    n_t: int = 400
    T: float = 1.0

    def __post_init__(self):
        if not (0 < self.y_min < self.y_max):
            raise SolverError("need 0 < y_min < y_max")
        if self.n_y < 16:
            raise SolverError("n_y must be >= 16")
        if self.n_t < 8:
            raise SolverError("n_t must be >= 8")
        if not self.T > 0:
            raise SolverError("T must be positive")

    @property
    def xi(self) -> np.ndarray:
        return np.linspace(np.log(self.y_min), np.log(self.y_max), self.n_y)

    @property
    def y(self) -> np.ndarray:
        return np.exp(self.xi)

    @property
    def dxi(self) -> float:
        return (np.log(self.y_max) - np.log(self.y_min)) / (self.n_y - 1)

    @property
    def dt(self) -> float:
        return self.T / self.n_t

    @property
    def t(self) -> np.ndarray:
        return np.linspace(0.0, self.T, self.n_t + 1)


@dataclass
class StepInfo:
    iterations: int
    clamp_bounds: tuple[float, float]
    clamp_active_fraction: float


@dataclass
class Diagnostics:
    max_residual: float = np.nan
    fixed_point_iterations: list = field(default_factory=list)
    clamp_active_fractions: list = field(default_factory=list)
    boundary_sensitive: bool = False


@dataclass
class DualSolution:
    """Grid sampling of the dual value function and its y-derivatives."""

    grid: LogGrid
    W: np.ndarray                  # shape (n_t + 1, n_y), W[n] at t_n
    W_y: np.ndarray
    W_yy: np.ndarray
    W_t: np.ndarray
    clamp_bounds: list
    diagnostics: Diagnostics
    q: float                       # dual growth exponent p/(1-p)

    @property
    def t(self) -> np.ndarray:
        return self.grid.t

    @property
    def y(self) -> np.ndarray:
        return self.grid.y


def clamp_gradient(q, m: float, M: float):
    """(m v q) ^ M -- clamp the (positive) gradient magnitude into [m, M]."""
    if not (0 <= m <= M):
        raise SolverError("clamp bounds need 0 <= m <= M")
    return np.minimum(np.maximum(q, m), M)


def terminal_slice(grid: LogGrid, bundle: ConjugateBundle) -> np.ndarray:
    """W(T, y_j) = tildeU2(y_j); fails if the left edge saturates the cap."""
    vals = np.asarray(bundle.U2_tilde(grid.y), dtype=float)
    if vals[0] >= bundle.cap:
        raise SaturatedConjugate(
            "tildeU2(y_min) saturates the overflow cap; raise y_min", point=(grid.y_min,))
    return vals


def _dxi_gradient(W: np.ndarray, dxi: float) -> np.ndarray:
    """d/dxi with centered interior stencils and one-sided second-order edges."""
    g = np.empty_like(W)
    g[1:-1] = (W[2:] - W[:-2]) / (2.0 * dxi)
    g[0] = (-3.0 * W[0] + 4.0 * W[1] - W[2]) / (2.0 * dxi)
    g[-1] = (3.0 * W[-1] - 4.0 * W[-2] + W[-3]) / (2.0 * dxi)
    return g


def gradient_y(W: np.ndarray, grid: LogGrid) -> np.ndarray:
    """W_y = W_xi / y on the log grid (second order; scheme-internal)."""
    return _dxi_gradient(W, grid.dxi) / grid.y


def second_y(W: np.ndarray, grid: LogGrid) -> np.ndarray:
    """W_yy = (W_xixi - W_xi) / y^2 on the log grid (second order)."""
    dxi = grid.dxi
    wxx = np.empty_like(W)
    wxx[1:-1] = (W[2:] - 2.0 * W[1:-1] + W[:-2]) / (dxi * dxi)
    wxx[0] = wxx[1]
    wxx[-1] = wxx[-2]
    return (wxx - _dxi_gradient(W, dxi)) / (grid.y * grid.y)


def _dxi_gradient_o4(W: np.ndarray, dxi: float) -> np.ndarray:
    """Fourth-order interior d/dxi; reverts to second order near the edges.

    The output derivative fields feed the W_y inversion of the primal
    recovery, where the second-order dxi^2/6 bias would show up directly
    as a relative error in V_x.
    """
    g = _dxi_gradient(W, dxi)
    g[2:-2] = (-W[4:] + 8.0 * W[3:-1] - 8.0 * W[1:-3] + W[:-4]) / (12.0 * dxi)
    return g


def gradient_y_o4(W: np.ndarray, grid: LogGrid) -> np.ndarray:
    return _dxi_gradient_o4(W, grid.dxi) / grid.y


def second_y_o4(W: np.ndarray, grid: LogGrid) -> np.ndarray:
    dxi = grid.dxi
    wxx = np.empty_like(W)
    wxx[1:-1] = (W[2:] - 2.0 * W[1:-1] + W[:-2]) / (dxi * dxi)
    wxx[2:-2] = (-W[4:] + 16.0 * W[3:-1] - 30.0 * W[2:-2]
                 + 16.0 * W[1:-3] - W[:-4]) / (12.0 * dxi * dxi)
    wxx[0] = wxx[1]
    wxx[-1] = wxx[-2]
    return (wxx - _dxi_gradient_o4(W, dxi)) / (grid.y * grid.y)


def boundary_values(W_prev: np.ndarray, grid: LogGrid, q: float,
                    fit_window: int = FIT_WINDOW) -> tuple[float, float]:
    """Dirichlet values at y_min / y_max from power-law fits of the last slice.

    Both tails behave like A y^{-q} (growth bound on the left, polynomial
    decay toward 0 on the right), so the single amplitude is least-squares
    fitted on the nearest ``fit_window`` interior nodes.  Windows whose
    values sit below ``FIT_FLOOR`` degenerate to 0.
    """
    if grid.n_y < 2 * fit_window + 4:
        raise SolverError("grid too small for the boundary fit windows")
    y = grid.y

    def fit(idx: np.ndarray, target_y: float) -> float:
        wv = W_prev[idx]
        if np.max(np.abs(wv)) < FIT_FLOOR:
            return 0.0
        phi = np.power(y[idx], -q)
        amp = float(np.dot(wv, phi) / np.dot(phi, phi))
        return max(amp * target_y ** (-q), 0.0)

    left = fit(np.arange(1, 1 + fit_window), grid.y_min)
    right = fit(np.arange(grid.n_y - 1 - fit_window, grid.n_y - 1), grid.y_max)
    return left, right


def _banded_matrix(n: int, lo: float, di: float, up: float) -> np.ndarray:
    """Tridiagonal (I - dt L) in solve_banded layout with identity edge rows."""
    ab = np.zeros((3, n))
    ab[0, 2:] = up          # super-diagonal entries A[j, j+1] for interior rows
    ab[0, 1] = 0.0
    ab[1, :] = di
    ab[1, 0] = ab[1, -1] = 1.0
    ab[2, :-2] = lo         # sub-diagonal entries A[j, j-1] for interior rows
    ab[2, -2] = 0.0
    return ab


def step_backward(
    W_next: np.ndarray,
    t_n: float,
    grid: LogGrid,
    bundle: ConjugateBundle,
    market: MarketModel,
    q: float,
    fp_tol: float = FP_TOL,
    max_iter: int = FP_MAX_ITER,
    widen: tuple[float, float] = CLAMP_WIDEN,
) -> tuple[np.ndarray, StepInfo]:
    """One implicit Euler step from the slice at t_{n+1} down to t_n.

    The diffusion (b^2/2sigma^2)(d_xixi - d_xi) is treated implicitly
    (tridiagonal solve); the source U1*(t, y, -w_y) uses the gradient of
    the latest iterate, clamped into the band derived from the previous
    slice.  Iterates until the slice sup-change drops below ``fp_tol``.
    """
    dt, dxi, y = grid.dt, grid.dxi, grid.y
    a = float(market.lam(t_n))

    g_prev = -gradient_y(W_next, grid)[1:-1]
    gmax = float(np.max(g_prev, initial=0.0))
    gmin = float(np.min(g_prev, initial=0.0))
    if gmax <= 1e-12:
        m, M = 0.0, np.inf          # degenerate previous slice: only enforce g >= 0
    else:
        m, M = max(widen[0] * gmin, 0.0), widen[1] * gmax

    lo = -dt * a * (1.0 / dxi**2 + 1.0 / (2.0 * dxi))
    di = 1.0 + 2.0 * dt * a / dxi**2
    up = -dt * a * (1.0 / dxi**2 - 1.0 / (2.0 * dxi))
    ab = _banded_matrix(grid.n_y, lo, di, up)
    n_y = grid.n_y

    # Dirichlet closure: both boundary values are the power-law fits of the
    # slice's own tails.  They enter the solve affinely, so the closure is
    # resolved exactly with two unit-response solves and a 2x2 system; only
    # the semilinear source is left to the fixed point.  (A closure that is
    # itself iterated converges like exp(-dxi / sqrt(a dt)) per pass and
    # stalls when dt is coarse relative to the spatial grid.)
    eL = np.zeros(n_y)
    eL[0] = 1.0
    eR = np.zeros(n_y)
    eR[-1] = 1.0
    WL = solve_banded((1, 1), ab, eL)
    WR = solve_banded((1, 1), ab, eR)
    fw = FIT_WINDOW
    idxL = np.arange(1, 1 + fw)
    idxR = np.arange(n_y - 1 - fw, n_y - 1)
    phiL = np.power(y[idxL], -q)
    phiR = np.power(y[idxR], -q)

    def fit_pair(W):
        left = np.dot(W[idxL], phiL) / np.dot(phiL, phiL) * grid.y_min ** (-q)
        right = np.dot(W[idxR], phiR) / np.dot(phiR, phiR) * grid.y_max ** (-q)
        return left, right

    closure = np.array([[1.0, 0.0], [0.0, 1.0]])
    cL = fit_pair(WL)
    cR = fit_pair(WR)
    closure[0, 0] -= cL[0]
    closure[0, 1] -= cR[0]
    closure[1, 0] -= cL[1]
    closure[1, 1] -= cR[1]

    y_int = y[1:-1]
    Wk = W_next.copy()
    rhs = np.empty_like(W_next)
    iterations = max_iter
    raw = None
    for it in range(max_iter):
        raw = -gradient_y(Wk, grid)[1:-1]
        g = clamp_gradient(raw, m, M)
        S = bundle.source(t_n, y_int, g)
        rhs[1:-1] = W_next[1:-1] + dt * S
        rhs[0] = 0.0
        rhs[-1] = 0.0
        W0 = solve_banded((1, 1), ab, rhs)
        bvec = np.asarray(fit_pair(W0))
        left, right = np.maximum(np.linalg.solve(closure, bvec), 0.0)
        Wn = W0 + left * WL + right * WR
        delta = float(np.max(np.abs(Wn - Wk)))
        Wk = Wn
        if delta < fp_tol:
            iterations = it + 1
            break
    else:
        raise FixedPointDivergence(
            f"source iteration did not reach {fp_tol:g} in {max_iter} steps; refine dt",
            point=(t_n,))

    # post-hoc discrete convexity away from the Dirichlet closure rows
    wyy = second_y(Wk, grid)[2:-2]
    scale = 1.0 + float(np.max(np.abs(Wk)))
    if np.min(wyy * y[2:-2] * y[2:-2]) < -CONVEXITY_TOL * scale:
        raise NonConvexSlice("slice lost discrete convexity in y", point=(t_n,))

    active = float(np.mean((raw < m - 1e-300) | (raw > M))) if np.isfinite(M) else 0.0
    return Wk, StepInfo(iterations=iterations, clamp_bounds=(m, M), clamp_active_fraction=active)


def solve_dual(
    market: MarketModel,
    utility: UtilityModel,
    grid: LogGrid,
    bundle: ConjugateBundle | None = None,
    fp_tol: float = FP_TOL,
    max_fp_iter: int = FP_MAX_ITER,
    validate: bool = True,
    check_truncation: bool = False,
) -> DualSolution:
    """Full backward sweep from W(T, .) = tildeU2 down to t = 0.

    ``check_truncation=True`` re-solves with the left truncation point
    halved and emits ``BoundaryLayerWarning`` if the solution at y_min
    moves by more than 1% (truncation sensitivity); off by default since
    it doubles the cost.
    """
    if validate:
        validate_model(market, utility).raise_if_failed()
    if abs(grid.T - market.T) > 1e-12 * max(1.0, market.T):
        raise SolverError(f"grid horizon {grid.T} != market horizon {market.T}")
    if bundle is None:
        bundle = build_bundle(utility)

    q = utility.q
    W = np.empty((grid.n_t + 1, grid.n_y))
    W[grid.n_t] = terminal_slice(grid, bundle)

    diag = Diagnostics()
    clamp_bounds: list = []

    if bundle.zero:
        W[:] = 0.0
    else:
        for n in range(grid.n_t - 1, -1, -1):
            W[n], info = step_backward(
                W[n + 1], float(grid.t[n]), grid, bundle, market, q,
                fp_tol=fp_tol, max_iter=max_fp_iter)
            diag.fixed_point_iterations.append(info.iterations)
            diag.clamp_active_fractions.append(info.clamp_active_fraction)
            clamp_bounds.append(info.clamp_bounds)
        diag.fixed_point_iterations.reverse()
        diag.clamp_active_fractions.reverse()
        clamp_bounds.reverse()

    W_y = np.vstack([gradient_y_o4(W[n], grid) for n in range(grid.n_t + 1)])
    W_yy = np.vstack([second_y_o4(W[n], grid) for n in range(grid.n_t + 1)])
    W_t = np.empty_like(W)
    dt = grid.dt
    W_t[1:-1] = (W[2:] - W[:-2]) / (2.0 * dt)
    W_t[0] = (W[1] - W[0]) / dt
    W_t[-1] = (W[-1] - W[-2]) / dt

    sol = DualSolution(grid=grid, W=W, W_y=W_y, W_yy=W_yy, W_t=W_t,
                       clamp_bounds=clamp_bounds, diagnostics=diag, q=q)
    diag.max_residual = _pde_residual(sol, bundle, market)

    if check_truncation and not bundle.zero:
        g2 = LogGrid(y_min=grid.y_min / 2.0, y_max=grid.y_max,
                     n_y=grid.n_y, n_t=grid.n_t, T=grid.T)
        ref = solve_dual(market, utility, g2, bundle=bundle, fp_tol=fp_tol,
                         max_fp_iter=max_fp_iter, validate=False, check_truncation=False)
        w_here = W[0, 0]
        w_ref = float(np.interp(np.log(grid.y_min), ref.grid.xi, ref.W[0]))
        denom = max(abs(w_here), 1e-300)
        if abs(w_here - w_ref) / denom > 0.01:
            diag.boundary_sensitive = True
            warnings.warn(
                f"solution at y_min moves {abs(w_here - w_ref) / denom:.2%} when "
                "y_min is halved; extend the grid left", BoundaryLayerWarning)

    return sol


def _pde_residual(sol: DualSolution, bundle: ConjugateBundle, market: MarketModel) -> float:
    """Max interior residual of the dual HJB under centered differences."""
    grid = sol.grid
    if sol.W.max() == 0.0 and sol.W.min() == 0.0:
        return 0.0
    y_int = grid.y[1:-1]
    worst = 0.0
    for n in range(1, grid.n_t):
        t_n = float(grid.t[n])
        a = float(market.lam(t_n))
        g = np.maximum(-sol.W_y[n][1:-1], 1e-300)
        r = -sol.W_t[n][1:-1] - a * y_int**2 * sol.W_yy[n][1:-1] - bundle.source(t_n, y_int, g)
        scale = 1.0 + np.abs(sol.W_t[n][1:-1])
        worst = max(worst, float(np.max(np.abs(r) / scale)))
    return worst


def check_dual_invariants(sol: DualSolution, bundle: ConjugateBundle,
                          region: tuple[float, float] | None = None) -> dict[str, bool]:
    """Structural properties of the dual value function as discrete checks.

    Checks (interior nodes, all time slices before T unless noted):
    nonnegativity and strict interior positivity, W_y < 0, W_yy > 0,
    monotone nonincreasing in t (W(t) >= W(t') for t <= t'), the growth
    bound W <= K_W (1 + y^{-q}) with K_W fitted on the left quarter of the
    grid, and the Jensen lower bound W >= tildeU2 at every node.
    """
    grid, W = sol.grid, sol.W
    res: dict[str, bool] = {}
    sl = slice(1, grid.n_y - 1)
    interior_t = range(grid.n_t)          # slices strictly before T

    res["nonnegative"] = bool(np.all(W >= -1e-12))
    zero_problem = bool(np.all(W == 0.0))
    res["strictly_positive_interior"] = zero_problem or bool(
        all(np.all(W[n, sl] > 0) for n in interior_t))
    res["W_y_negative"] = zero_problem or bool(
        all(np.all(sol.W_y[n, sl] < 0) for n in interior_t))
    res["W_yy_positive"] = zero_problem or bool(
        all(np.all(sol.W_yy[n, sl] > 0) for n in interior_t))

    scale = 1.0 + np.abs(W[1:])
    res["time_monotone"] = bool(np.all(W[:-1] - W[1:] >= -1e-9 * scale))

    yq = np.power(grid.y, -sol.q)
    kw = float(np.max(W[:, : grid.n_y // 4] / (1.0 + yq[: grid.n_y // 4]), initial=0.0))
    res["growth_bound"] = zero_problem or bool(np.all(W <= 1.01 * kw * (1.0 + yq) + 1e-12))

    u2t = np.asarray(bundle.U2_tilde(grid.y), dtype=float)
    res["jensen_lower_bound"] = bool(np.all(W >= u2t[None, :] - 1e-9 * (1.0 + u2t[None, :])))

    if sol.diagnostics.clamp_active_fractions:
        res["clamp_inactive"] = max(sol.diagnostics.clamp_active_fractions) <= 0.01
    else:
        res["clamp_inactive"] = True
    return res
