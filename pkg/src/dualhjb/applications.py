"""Financial applications: random horizons and the liquid/illiquid market.

Random horizon.  When the investment problem ends at an independent random
time tau with CDF F and density f, the stopped functional

    E[ int_0^{tau ^ T} G1(t, c_t) dt + G2(tau ^ T, X_{tau ^ T}) ]

rewrites as an equivalent fixed-horizon problem with wealth-dependent
running utility

    U1(t, c, x) = G1(t, c) (1 - F(t)) + G2(t, x) f(t),
    U2(x)      = (1 - F(T)) G2(T, x),

which is exactly the shape the dual solver handles.  When the composite
fails the vanish-at-origin normalization (G2(t, 0) > 0, as happens for the
illiquid continuation payoff), the utilities are shifted by the
state-independent amount and the deterministic offset

    C(t) = int_t^T G2(s, 0) f(s) ds + (1 - F(T)) G2(T, 0)

is carried on the model; the shifted problem has identical optimizers and
its value differs by exactly C(t).

Liquid/illiquid market.  Two correlated lognormal assets, the second
tradable only at arrival times of an independent renewal process.  For
power utility the value is homogeneous, V(r) = K_V r^p / p, and between
trading dates the problem reduces to one liquid dimension: the liquid/
illiquid wealth ratio Z follows

    dZ = -c~ dt + theta~ ((b_L - rho sigma_I sigma_L (1 - p)) dt + sigma_L dW)

under a measure change that shifts the discount by

    k_{Y,p} = p rho sigma_I b_L / sigma_L - p (1 - p) rho^2 sigma_I^2 / 2,

and the terminal weight at the next trading date is the liquidation
operator E[V(x + y J_t)].  The law of J follows from the exact solutions
of the asset dynamics: with
I_t = exp((b_I - sigma_I^2/2) t + sigma_I (rho W_t + sqrt(1-rho^2) B_t))
and Y_t/alpha0 = exp((rho b_L sigma_I/sigma_L - rho^2 sigma_I^2/2) t
+ rho sigma_I W_t), the common rho sigma_I W_t factor cancels in
J_t = alpha0 I_t / Y_t, leaving log J_t Gaussian with mean rate
b_I - sigma_I^2/2 - rho sigma_I b_L / sigma_L + rho^2 sigma_I^2 / 2 and
variance rate sigma_I^2 (1 - rho^2), driven by the independent factor B
only -- so the W-measure change does not touch it.  ``kv_fixed_point``
iterates the resulting dynamic programming map
K -> p * inner value at unit wealth.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from . import _kernels
from .errors import (
    ApplicationError,
    DiscountTooSmall,
    NegativeWeight,
    NoConvergence,
    QuadratureUnstable,
)
from .dual_solver import LogGrid, solve_dual
from .model import MarketModel, UtilityModel, power_power_utility, separable_utility
from .primal import legendre_min_dense
from .simulate import SimConfig, SimReport, _finalize, step_normals

__all__ = [
    "PowerRunning",
    "RandomHorizonSpec",
    "ExponentialArrival",
    "IlliquidParams",
    "IlliquidReduction",
    "random_horizon_transform",
    "illiquid_reduction",
    "liquidation_value",
    "kv_fixed_point",
    "KVResult",
    "random_horizon_equivalence",
]


# ---------------------------------------------------------------------------
# random horizon
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class PowerRunning:
    """Structured running utility g(t) z^p / p; unlocks analytic conjugates."""

    coef: Callable | float
    p: float

    def coef_fn(self) -> Callable:
        c = self.coef
        return c if callable(c) else (lambda t, v=float(c): v)

    def __call__(self, t, z):
        g = self.coef_fn()(t)
        z = np.asarray(z, dtype=float)
        zp = np.sqrt(z) if self.p == 0.5 else np.power(z, self.p)
        return g * zp / self.p


@dataclass(frozen=True)
class RandomHorizonSpec:
    """Stopped-functional data: utilities G1, G2 and the law (F, f) of tau."""

    G1: Callable                  # (t, c); PowerRunning unlocks analytic path
    G2: Callable                  # (t, x)
    F: Callable                   # CDF of tau on [0, inf)
    f: Callable                   # density of F on [0, T)
    T: float
    tau_sampler: Callable | None = None   # u in (0,1) -> tau; derived from F if None

    def validate(self, n_probe: int = 257) -> None:
        ts = np.linspace(0.0, self.T, n_probe)
        Fv = np.asarray([float(self.F(t)) for t in ts])
        fv = np.asarray([float(self.f(t)) for t in ts])
        if np.any(np.diff(Fv) < -1e-12):
            raise ApplicationError("F must be nondecreasing")
        if Fv[0] < -1e-12 or np.any(Fv > 1 + 1e-12):
            raise ApplicationError("F must take values in [0, 1]")
        if np.any(fv < 0):
            raise NegativeWeight("density f takes negative values",
                                 point=(float(ts[np.argmin(fv)]),))
        # int_0^t f = F(t) - F(0) by composite trapezoid; escalate the probe
        # resolution before failing, since fast horizons concentrate f near 0
        n = n_probe
        while True:
            ts = np.linspace(0.0, self.T, n)
            Fv = np.asarray([float(self.F(t)) for t in ts])
            fv = np.asarray([float(self.f(t)) for t in ts])
            integ = np.concatenate([[0.0], np.cumsum(0.5 * (fv[1:] + fv[:-1]) * np.diff(ts))])
            if np.max(np.abs(integ - (Fv - Fv[0]))) <= 1e-4 * (1.0 + Fv[-1]):
                return
            if n > 70_000:
                raise ApplicationError("density f does not integrate to F")
            n = 4 * n

    def sample_tau(self, u: np.ndarray) -> np.ndarray:
        if self.tau_sampler is not None:
            return np.asarray(self.tau_sampler(u), dtype=float)
        # generic inverse-CDF on a dense grid, beyond-horizon mass mapped past T
        ts = np.linspace(0.0, self.T, 4097)
        Fv = np.asarray([float(self.F(t)) for t in ts])
        out = np.interp(u, Fv, ts, right=2.0 * self.T)
        out[u > Fv[-1]] = 2.0 * self.T
        return out


def exponential_horizon(rate: float, T: float, G1: Callable, G2: Callable) -> RandomHorizonSpec:
    """Spec for tau ~ Exp(rate), with the exact inverse-CDF sampler."""
    return RandomHorizonSpec(
        G1=G1, G2=G2,
        F=lambda t: 1.0 - np.exp(-rate * t),
        f=lambda t: rate * np.exp(-rate * t),
        T=T,
        tau_sampler=lambda u: -np.log1p(-np.minimum(u, 1.0 - 1e-16)) / rate,
    )


def random_horizon_transform(spec: RandomHorizonSpec, K: float | None = None) -> UtilityModel:
    """Composite fixed-horizon UtilityModel equivalent to the stopped problem.

    Power-form G1 and G2 produce the analytic time-varying power family;
    a power G1 with a generic wealth term produces the separable family.
    If the raw composite violates U1(t,0,0) = 0 (wealth term positive at
    the origin) it is shifted and the offset C(t) is attached as
    ``value_offset`` on the returned model.
    """
    spec.validate()
    F, f, T = spec.F, spec.f, spec.T
    surv = lambda t: 1.0 - float(F(t))
    survT = surv(T)

    if isinstance(spec.G1, PowerRunning) and isinstance(spec.G2, PowerRunning):
        if spec.G1.p != spec.G2.p:
            raise ApplicationError("G1 and G2 must share the growth exponent")
        p = spec.G1.p
        g1 = spec.G1.coef_fn()
        g2 = spec.G2.coef_fn()
        a_c = lambda t: g1(t) * (1.0 - float(F(t)))
        a_x = lambda t: g2(t) * float(f(t))
        a_T = survT * g2(T)
        return power_power_utility(p, a_c=a_c, a_x=a_x, a_T=a_T, K=K,
                                   label="random_horizon(power)")

    if isinstance(spec.G1, PowerRunning):
        p = spec.G1.p
        g1 = spec.G1.coef_fn()
        G2 = spec.G2
        base = lambda t: float(G2(t, 0.0))

        def x_part(t, x):
            return float(f(t)) * (np.asarray(G2(t, x), dtype=float) - base(t))

        def x_part_dx(t, x):
            h = 1e-6 * (np.abs(x) + 1.0)
            return float(f(t)) * (np.asarray(G2(t, x + h), dtype=float)
                                  - np.asarray(G2(t, np.maximum(x - h, 0.0)), dtype=float)) / (2.0 * h)

        u2_base = survT * base(T)

        def U2(x):
            return survT * np.asarray(G2(T, x), dtype=float) - u2_base

        # deterministic value offset C(t) by cumulative trapezoid
        ts = np.linspace(0.0, T, 2049)
        g0 = np.asarray([float(f(t)) * base(t) for t in ts])
        tail = np.concatenate([
            np.cumsum((0.5 * (g0[1:] + g0[:-1]) * np.diff(ts))[::-1])[::-1], [0.0]])
        offset = lambda t: float(np.interp(t, ts, tail)) + u2_base

        if K is None:
            # growth envelope from probes of the composite
            xs = np.geomspace(1e-2, 1e4, 25)
            vals = max(float(np.max(x_part(t, xs) / (1.0 + xs ** p))) for t in ts[:: 256])
            K = max(float(max(g1(t) * surv(t) for t in ts[:: 256])) / p, vals, 1e-12) * 2.0 + 1.0
        return separable_utility(
            p=p, K=K,
            c_power_coef=lambda t: g1(t) * (1.0 - float(F(t))),
            x_part=x_part, x_part_dx=x_part_dx,
            U2=U2,
            growth_case=("running",) if g1(T) * survT > 0 else (),
            value_offset=offset,
            label="random_horizon(separable)",
        )

    raise ApplicationError(
        "generic G1 not supported: supply PowerRunning for the consumption part")


# ---------------------------------------------------------------------------
# illiquid market reduction
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class ExponentialArrival:
    rate: float

    def cdf(self, t):
        return 1.0 - np.exp(-self.rate * np.asarray(t, dtype=float))

    def density(self, t):
        return self.rate * np.exp(-self.rate * np.asarray(t, dtype=float))


@dataclass(frozen=True)
class IlliquidParams:
    b_L: float
    sigma_L: float
    b_I: float
    sigma_I: float
    rho: float
    p: float
    beta: float
    arrival: ExponentialArrival = field(default_factory=lambda: ExponentialArrival(1.0))
    margin: float = 0.0

    def __post_init__(self):
        if min(self.b_L, self.sigma_L, self.sigma_I) <= 0:
            raise ApplicationError("b_L, sigma_L, sigma_I must be positive")
        if not (-1.0 < self.rho < 1.0):
            raise ApplicationError("rho must lie in (-1, 1)")
        if not (0 < self.p < 1):
            raise ApplicationError("p must lie in (0, 1)")
        if self.beta <= 0:
            raise ApplicationError("beta must be positive")


@dataclass(frozen=True)
class IlliquidReduction:
    """Effective one-dimensional market and measure-change constants."""

    k_yp: float
    b_eff: float
    sigma: float
    beta_eff: float
    log_mean_rate: float          # of log J_t per unit time
    log_var_rate: float

    def market(self, T: float) -> MarketModel:
        return MarketModel(b=self.b_eff, sigma=self.sigma, T=T)


def illiquid_reduction(params: IlliquidParams) -> IlliquidReduction:
    """Constants of the one-dimensional reduced problem.

    k_{Y,p} = p rho sigma_I b_L / sigma_L - p (1-p) rho^2 sigma_I^2 / 2,
    effective drift b_L - rho sigma_I sigma_L (1 - p), volatility sigma_L,
    discount beta - k_{Y,p}.  Raises DiscountTooSmall when the shifted
    discount is not positive beyond the configured margin.
    """
    p, rho = params.p, params.rho
    k_yp = p * rho * params.sigma_I * params.b_L / params.sigma_L \
        - 0.5 * p * (1.0 - p) * rho * rho * params.sigma_I ** 2
    if params.beta <= k_yp + params.margin:
        raise DiscountTooSmall(
            f"beta = {params.beta} <= k_yp + margin = {k_yp + params.margin}")
    b_eff = params.b_L - rho * params.sigma_I * params.sigma_L * (1.0 - p)
    if b_eff <= 0:
        raise ApplicationError("effective drift must be positive for the reduced model")
    log_mean = params.b_I - 0.5 * params.sigma_I ** 2 \
        - rho * params.sigma_I * params.b_L / params.sigma_L \
        + 0.5 * rho * rho * params.sigma_I ** 2
    log_var = params.sigma_I ** 2 * (1.0 - rho * rho)
    return IlliquidReduction(k_yp=k_yp, b_eff=b_eff, sigma=params.sigma_L,
                             beta_eff=params.beta - k_yp,
                             log_mean_rate=log_mean, log_var_rate=log_var)


_GH_CACHE: dict[int, tuple[np.ndarray, np.ndarray]] = {}


def _gh_nodes(order: int):
    if order not in _GH_CACHE:
        xg, wg = np.polynomial.hermite.hermgauss(order)
        _GH_CACHE[order] = (xg * math.sqrt(2.0), wg / math.sqrt(math.pi))
    return _GH_CACHE[order]


def liquidation_value(params: IlliquidParams, K_V: float, t: float, x, y,
                      quad_order: int = 64, check: bool = False):
    """(K_V / p) E[(x + y J_t)^p] by Gauss-Hermite quadrature.

    log J_t is Gaussian with the reduction's mean/variance rates; at t = 0
    the law degenerates to J = 1 and the formula is exact.  ``check=True``
    doubles the order and raises QuadratureUnstable on > 1e-6 relative
    movement.
    """
    red = illiquid_reduction(params)
    p = params.p
    m = red.log_mean_rate * t
    sdev = math.sqrt(max(red.log_var_rate * t, 0.0))
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)

    def eval_at(order: int):
        z, w = _gh_nodes(order)
        J = np.exp(m + sdev * z)
        base = x[..., None] + y[..., None] * J
        return (K_V / p) * np.sum(w * np.power(base, p), axis=-1)

    val = eval_at(quad_order)
    if check:
        ref = eval_at(2 * quad_order)
        denom = np.maximum(np.abs(ref), 1e-300)
        if np.max(np.abs(val - ref) / denom) > 1e-6:
            raise QuadratureUnstable("liquidation quadrature moved > 1e-6 on refinement")
    return val if val.ndim else float(val)


# ---------------------------------------------------------------------------
# fixed point for the homogeneity constant
# ---------------------------------------------------------------------------

@dataclass
class KVResult:
    K_V: float
    trace: list
    converged: bool
    t_trunc: float
    reduction: IlliquidReduction


def _initial_min(market, util, grid: LogGrid, x: float, richardson: bool) -> float:
    """min_y (W(0, y) + x y) from the dual solve, optionally Richardson-
    extrapolated in dt (two solves at dt and 2 dt) to kill the first-order
    time-stepping bias of the implicit scheme."""
    sol = solve_dual(market, util, grid, validate=False)
    v1 = legendre_min_dense(sol, 0, x)
    if not richardson:
        return v1
    coarse = LogGrid(y_min=grid.y_min, y_max=grid.y_max, n_y=grid.n_y,
                     n_t=max(grid.n_t // 2, 8), T=grid.T)
    v2 = legendre_min_dense(solve_dual(market, util, coarse, validate=False), 0, x)
    return 2.0 * v1 - v2


def _inner_value(params: IlliquidParams, red: IlliquidReduction, K: float,
                 alpha0: float, t_trunc: float, grid: LogGrid,
                 quad_order: int, richardson: bool = True) -> float:
    """Value of the between-arrivals problem at unit wealth for a given split."""
    p = params.p
    lam = params.arrival.rate
    if alpha0 >= 1.0 - 1e-12:
        # everything illiquid: liquid problem starts absorbed; only the
        # liquidation offset remains
        spec = _illiquid_spec(params, red, K, t_trunc, quad_order)
        util = random_horizon_transform(spec)
        return float(util.value_offset(0.0))
    if alpha0 <= 0.0:
        beta = params.beta
        spec = exponential_horizon(
            lam, t_trunc,
            G1=PowerRunning(lambda t: math.exp(-beta * t), p),
            G2=PowerRunning(lambda t: math.exp(-beta * t) * K, p),
        )
        util = random_horizon_transform(spec)
        market = MarketModel(b=params.b_L, sigma=params.sigma_L, T=t_trunc)
        return _initial_min(market, util, grid, 1.0, richardson)

    z0 = (1.0 - alpha0) / alpha0
    spec = _illiquid_spec(params, red, K, t_trunc, quad_order)
    util = random_horizon_transform(spec)
    market = red.market(t_trunc)
    value_z = _initial_min(market, util, grid, z0, richardson) + float(util.value_offset(0.0))
    return alpha0 ** p * value_z


def _illiquid_spec(params, red, K, t_trunc, quad_order):
    beta_eff = red.beta_eff
    lam = params.arrival.rate

    def G2(t, z):
        return math.exp(-beta_eff * t) * liquidation_value(
            params, K, t, np.asarray(z, dtype=float), 1.0, quad_order=quad_order)

    return exponential_horizon(
        lam, t_trunc,
        G1=PowerRunning(lambda t: math.exp(-beta_eff * t), params.p),
        G2=G2,
    )


def kv_fixed_point(
    params: IlliquidParams,
    grid: LogGrid | None = None,
    t_trunc: float | None = None,
    trunc_target: float = 1e-4,
    max_iter: int = 40,
    tol: float = 1e-4,
    k0: float | None = None,
    force_alpha0: float | None = None,
    alpha_grid: int = 7,
    golden_iters: int = 6,
    quad_order: int = 48,
    n_y: int = 160,
    n_t_per_unit: int = 400,
    richardson: bool = True,
) -> KVResult:
    """Iterate K -> p * sup_alpha0 (inner value at unit wealth) to its fixed point.

    The inner problem runs over one inter-arrival period, truncated at
    ``t_trunc`` chosen so exp(-(beta - k_yp) t_trunc) < ``trunc_target``;
    with exponential arrivals the truncated map has the same fixed point as
    the untruncated one (memorylessness makes the terminal weight exact at
    the fixed point).  alpha0 is searched on a bracket grid refined by
    golden section, exploiting p-homogeneity to fix wealth at 1.
    """
    red = illiquid_reduction(params)
    p = params.p
    if t_trunc is None:
        t_trunc = math.log(1.0 / trunc_target) / red.beta_eff
    if grid is None:
        grid = LogGrid(y_min=1e-3, y_max=1e3, n_y=n_y,
                       n_t=max(int(n_t_per_unit * t_trunc), 8), T=t_trunc)
    elif abs(grid.T - t_trunc) > 1e-9:
        raise ApplicationError("grid horizon must equal t_trunc")

    K = k0 if k0 is not None else 1.0
    trace: list[dict] = []
    gold = (math.sqrt(5.0) - 1.0) / 2.0

    for it in range(max_iter):
        if force_alpha0 is not None:
            a_best = force_alpha0
            v_best = _inner_value(params, red, K, a_best, t_trunc, grid, quad_order,
                                  richardson=richardson)
        else:
            alphas = np.linspace(0.0, 1.0, alpha_grid)
            vals = [_inner_value(params, red, K, float(a), t_trunc, grid, quad_order, richardson=richardson)
                    for a in alphas]
            j = int(np.argmax(vals))
            a, b = alphas[max(j - 1, 0)], alphas[min(j + 1, len(alphas) - 1)]
            x1 = b - gold * (b - a)
            x2 = a + gold * (b - a)
            f1 = _inner_value(params, red, K, float(x1), t_trunc, grid, quad_order, richardson=richardson)
            f2 = _inner_value(params, red, K, float(x2), t_trunc, grid, quad_order, richardson=richardson)
            for _ in range(golden_iters):
                if f1 < f2:
                    a, x1, f1 = x1, x2, f2
                    x2 = a + gold * (b - a)
                    f2 = _inner_value(params, red, K, float(x2), t_trunc, grid, quad_order, richardson=richardson)
                else:
                    b, x2, f2 = x2, x1, f1
                    x1 = b - gold * (b - a)
                    f1 = _inner_value(params, red, K, float(x1), t_trunc, grid, quad_order, richardson=richardson)
            cands = [(vals[j], float(alphas[j])), (f1, float(x1)), (f2, float(x2))]
            v_best, a_best = max(cands)
        K_next = p * v_best
        trace.append({"iteration": it, "K": K, "K_next": K_next, "alpha0": a_best})
        if abs(K_next - K) <= tol * max(abs(K), 1e-12):
            return KVResult(K_V=K_next, trace=trace, converged=True,
                            t_trunc=t_trunc, reduction=red)
        K = K_next
    raise NoConvergence(f"K_V iteration did not converge in {max_iter} steps", trace=trace)


# ---------------------------------------------------------------------------
# random-horizon equivalence check (shared-noise MC)
# ---------------------------------------------------------------------------

def random_horizon_equivalence(
    spec: RandomHorizonSpec,
    policy: Callable,
    market: MarketModel,
    x0: float,
    cfg: SimConfig,
) -> dict:
    """Direct stopped functional vs transformed fixed-horizon functional.

    Both estimates ride the same simulated wealth paths (the fixed feedback
    ``policy(t, X) -> (c, pi)``); the direct form additionally draws tau per
    path from an auxiliary stream and stops at tau ^ T, while the
    transformed form weights the running terms by (1 - F) and f.  Agreement
    within twice the combined standard error is the executable form of the
    rewriting identity.
    """
    T = spec.T
    n_steps = cfg.check_budget(T - 0.0)
    n = cfg.n_paths
    dt = cfg.dt_sim
    sq = math.sqrt(dt)

    u = np.random.Generator(np.random.Philox(
        key=((cfg.seed ^ 0xD1B54A32D192ED03) % (1 << 64)) << 64 | 1)).random(n)
    tau = spec.sample_tau(u)
    k_tau = np.minimum(np.floor(tau / dt + 1e-12).astype(np.int64), n_steps)

    X = np.full(n, float(x0))
    alive = X > 0
    J_dir = np.zeros(n)
    J_tr = np.zeros(n)
    stopped_val = np.zeros(n)
    stopped = np.zeros(n, dtype=bool)

    for k in range(n_steps):
        t = k * dt
        c, pi = policy(t, X)
        c = np.asarray(c, dtype=float).copy()
        pi = np.asarray(pi, dtype=float).copy()
        c[~alive] = 0.0
        pi[~alive] = 0.0
        g1 = np.asarray(spec.G1(t, c), dtype=float)
        g2 = np.asarray(spec.G2(t, X), dtype=float)
        running = k < k_tau
        J_dir += np.where(running, g1, 0.0) * dt
        hit = (~stopped) & (k_tau == k)
        if np.any(hit):
            stopped_val[hit] = g2[hit]
            stopped[hit] = True
        J_tr += ((1.0 - float(spec.F(t))) * g1 + float(spec.f(t)) * g2) * dt
        Z = step_normals(cfg.seed, k, n, antithetic=cfg.antithetic)
        _kernels.euler_step(X, alive, c, pi, Z, float(market.drift(t)),
                            float(market.vol(t)), dt, sq)

    g2T = np.asarray(spec.G2(T, X), dtype=float)
    stopped_val[~stopped] = g2T[~stopped]
    J_dir += stopped_val
    J_tr += (1.0 - float(spec.F(T))) * g2T

    e_d, se_d, run_d = _finalize(J_dir, cfg)
    e_t, se_t, run_t = _finalize(J_tr, cfg)
    combined = math.sqrt(se_d * se_d + se_t * se_t)
    return {
        "direct": SimReport(estimate=e_d, std_error=se_d, n_paths=n, running=run_d),
        "transformed": SimReport(estimate=e_t, std_error=se_t, n_paths=n, running=run_t),
        "difference": e_d - e_t,
        "combined_se": combined,
        "within_2se": abs(e_d - e_t) <= 2.0 * combined,
    }
