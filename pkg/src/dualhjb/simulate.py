"""Monte Carlo verification engine.

Simulates the closed-loop wealth SDE

    dX = (b(t) Pi(t, X) - C(t, X)) dt + sigma(t) Pi(t, X) dW,

with absorption at zero (once wealth hits 0 the only admissible
continuation is the zero strategy, so the path is frozen with zero
controls), and the dual state SDE

    dY = -u(t, Y) dt - (b(t)/sigma(t)) Y dW,

whose multiplicative part is stepped by the exact lognormal factor so the
u = 0 oracle checks carry no discretization bias.  Functionals are
estimated with left-endpoint quadrature.

Reproducibility: noise comes from counter-based Philox streams keyed by
(seed, step index); path i reads component i of each step's draw.  The
estimate is therefore a pure function of SimConfig, independent of thread
count or call order; worker threads only ever parallelize *across*
independent simulations.
"""

from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from . import _kernels
from .errors import BudgetExceeded, ExcessiveRejection, NaNPath, SimulationError
from .model import MarketModel, UtilityModel
from .primal import PrimalSolution
from .transforms import ConjugateBundle

__all__ = [
    "SimConfig",
    "SimReport",
    "CheckOutcome",
    "TestReport",
    "step_normals",
    "simulate_closed_loop",
    "simulate_dual_state",
    "paired_supermartingale",
    "verification_test",
]

_TAU_TAG = 0x9E3779B97F4A7C15  # key spice for auxiliary (non-Brownian) draws
_N_CHECKPOINTS = 32


@dataclass(frozen=True)
class SimConfig:
    n_paths: int = 10_000
    dt_sim: float = 1e-3
    seed: int = 0
    scheme: str = "euler_maruyama"
    antithetic: bool = False
    budget: float = 2e9           # max path-steps
    n_workers: int = 1
    dump_paths: bool = False
    n_dump: int = 50

    def __post_init__(self):
        if self.n_paths < 100:
            raise SimulationError("n_paths must be >= 100")
        if self.dt_sim <= 0:
            raise SimulationError("dt_sim must be positive")
        if self.scheme != "euler_maruyama":
            raise SimulationError(f"unknown scheme {self.scheme!r}")
        if self.antithetic and self.n_paths % 2:
            raise SimulationError("antithetic pairs need an even n_paths")

    def check_budget(self, horizon: float) -> int:
        n_steps = int(round(horizon / self.dt_sim))
        if abs(n_steps * self.dt_sim - horizon) > 1e-9 * max(1.0, horizon):
            raise SimulationError("dt_sim must divide the simulation horizon")
        if self.dt_sim > horizon / 16.0 + 1e-15:
            raise SimulationError("dt_sim must be <= horizon / 16")
        if self.n_paths * n_steps > self.budget:
            raise BudgetExceeded(
                f"{self.n_paths} paths x {n_steps} steps exceeds budget {self.budget:.3g}")
        return n_steps


@dataclass
class SimReport:
    estimate: float
    std_error: float
    n_paths: int
    n_absorbed: int = 0
    n_rejected: int = 0
    mean_terminal_wealth: float = float("nan")
    running: list = field(default_factory=list)   # (n_used, estimate, std_error)
    extra: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        return {
            "estimate": self.estimate,
            "std_error": self.std_error,
            "n_paths": self.n_paths,
            "n_absorbed": self.n_absorbed,
            "n_rejected": self.n_rejected,
            "mean_terminal_wealth": self.mean_terminal_wealth,
            "running": [list(r) for r in self.running],
            **self.extra,
        }


def step_normals(seed: int, step: int, n: int, tag: int = 0, antithetic: bool = False) -> np.ndarray:
    """Standard normals for one time step from a counter-based stream.

    The Philox key packs (seed xor tag-mix) in the high word and the step
    index in the low word; identical arguments give identical draws on any
    platform and in any call order.
    """
    key = ((int(seed) ^ (tag * _TAU_TAG)) % (1 << 64)) << 64 | (int(step) % (1 << 64))
    gen = np.random.Generator(np.random.Philox(key=key))
    if antithetic:
        half = gen.standard_normal(n // 2)
        return np.concatenate([half, -half])
    return gen.standard_normal(n)


def _finalize(J: np.ndarray, cfg: SimConfig, mask: np.ndarray | None = None) -> tuple[float, float, list]:
    """Estimate, standard error and running prefix estimates.

    With antithetic pairing the error is computed over pair averages.
    """
    vals = J if mask is None else J[mask]
    n = len(vals)
    if n == 0:
        return float("nan"), float("nan"), []
    est = float(np.mean(vals))
    if cfg.antithetic and mask is None:
        pairs = 0.5 * (J[: len(J) // 2] + J[len(J) // 2:])
        se = float(np.std(pairs, ddof=1) / math.sqrt(len(pairs)))
    else:
        se = float(np.std(vals, ddof=1) / math.sqrt(n))
    csum = np.cumsum(vals)
    csq = np.cumsum(vals * vals)
    running = []
    for m in np.unique(np.linspace(max(2, n // _N_CHECKPOINTS), n, _N_CHECKPOINTS).astype(int)):
        mu = csum[m - 1] / m
        var = max(csq[m - 1] / m - mu * mu, 0.0) * m / max(m - 1, 1)
        running.append((int(m), float(mu), float(math.sqrt(var / m))))
    return est, se, running


class _FeedbackTables:
    """Feedback ratios C/x, Pi/x tabulated on the primal (t, log-x) grid.

    Lookup is O(1) per point: the wealth grid is geometric, so the cell
    index is an affine function of log X; ratios are linearly blended in
    both t and log x, with constant extrapolation beyond the grid edges.
    """

    def __init__(self, primal: PrimalSolution):
        self.x = primal.x
        self.lx0 = math.log(primal.x[0])
        self.dlx = math.log(primal.x[1] / primal.x[0])
        self.n_x = len(primal.x)
        self.t = primal.t
        with np.errstate(invalid="ignore"):
            self.cr = primal.C_feedback / primal.x[None, :]
            self.pr = primal.Pi_feedback / primal.x[None, :]
        self.out_of_range = 0

    def rows(self, t: float) -> tuple[np.ndarray, np.ndarray]:
        dt = self.t[1] - self.t[0]
        k = min(max((t - self.t[0]) / dt, 0.0), len(self.t) - 1.0)
        i = min(int(k), len(self.t) - 2)
        w = k - i
        return ((1 - w) * self.cr[i] + w * self.cr[i + 1],
                (1 - w) * self.pr[i] + w * self.pr[i + 1])

    def lookup(self, row: np.ndarray, X: np.ndarray) -> np.ndarray:
        return self.lookup2(row, None, X)[0]

    def lookup2(self, crow: np.ndarray, prow: np.ndarray | None, X: np.ndarray):
        """Blend one or two ratio rows at X with a single index computation."""
        lx = np.log(np.maximum(X, 1e-300))
        f = (lx - self.lx0) / self.dlx
        self.out_of_range += int(np.count_nonzero((f < 0) | (f > self.n_x - 1)))
        f = np.clip(f, 0.0, self.n_x - 1 - 1e-12)
        i = f.astype(np.int64)
        w = f - i
        wflip = 1.0 - w
        c = crow[i] * wflip + crow[i + 1] * w
        if prow is None:
            return c, None
        return c, prow[i] * wflip + prow[i + 1] * w


def simulate_closed_loop(
    t0: float,
    x0: float,
    primal: PrimalSolution,
    market: MarketModel,
    utility: UtilityModel,
    cfg: SimConfig,
    gamma_c: float = 1.0,
    gamma_pi: float = 1.0,
    policy: Callable | None = None,
    trace: list | None = None,
) -> SimReport:
    """Estimate E[int U1(s, c_s, X_s) ds + U2(X_T)] under the feedback policy.

    The policy defaults to the PrimalSolution feedback maps scaled by
    (gamma_c, gamma_pi); ``policy(t, X) -> (c, pi)`` overrides them.  On
    the first crossing X <= 0 a path is frozen at zero with zero controls.
    ``trace`` (with cfg.dump_paths) collects (path, t, X, c, pi) rows for
    the first cfg.n_dump paths.
    """
    T = market.T
    n_steps = cfg.check_budget(T - t0)
    n = cfg.n_paths
    dt = cfg.dt_sim
    sq = math.sqrt(dt)

    tables = None if policy is not None else _FeedbackTables(primal)
    fam = utility.power
    # the fused kernel accrues the power-family running utility inline;
    # custom utilities and path dumps go through the split control path
    fused = tables is not None and fam is not None and trace is None

    X = np.full(n, float(x0))
    alive = X > 0
    J = np.zeros(n)
    n_dump = min(cfg.n_dump, n) if cfg.dump_paths else 0
    oob = 0
    c_buf = np.empty(n)
    pi_buf = np.empty(n)

    for k in range(n_steps):
        t = t0 + k * dt
        Z = step_normals(cfg.seed, k, n, antithetic=cfg.antithetic)
        b = float(market.drift(t))
        s = float(market.vol(t))
        if fused:
            crow, prow = tables.rows(t)
            oob += _kernels.fused_power_step(
                X, alive, J, Z, crow, prow, tables.lx0, 1.0 / tables.dlx,
                gamma_c, gamma_pi, b, s, dt, sq,
                float(fam.a_c(t)), float(fam.a_x(t)), utility.p)
            continue
        if policy is not None:
            c, pi = policy(t, X)
            c = np.asarray(c, dtype=float) * gamma_c
            pi = np.asarray(pi, dtype=float) * gamma_pi
            c[~alive] = 0.0
            pi[~alive] = 0.0
        else:
            crow, prow = tables.rows(t)
            oob += _kernels.controls_step(
                X, alive, crow, prow, tables.lx0, 1.0 / tables.dlx,
                gamma_c, gamma_pi, c_buf, pi_buf)
            c, pi = c_buf, pi_buf
        if trace is not None and n_dump:
            for i in range(n_dump):
                trace.append((i, t, float(X[i]), float(c[i]), float(pi[i])))
        J += np.asarray(utility.U1(t, c, X), dtype=float) * dt
        _kernels.euler_step(X, alive, c, pi, Z, b, s, dt, sq)
        if np.any(np.isnan(X)):
            raise NaNPath("non-finite wealth", point=(k, int(np.argmax(np.isnan(X)))))
    if trace is not None and n_dump:
        for i in range(n_dump):
            trace.append((i, T, float(X[i]), 0.0, 0.0))

    if np.any(np.isnan(X)):
        raise NaNPath("non-finite wealth", point=(n_steps, int(np.argmax(np.isnan(X)))))
    J += np.asarray(utility.U2(X), dtype=float)
    est, se, running = _finalize(J, cfg)
    return SimReport(
        estimate=est, std_error=se, n_paths=n,
        n_absorbed=int(np.count_nonzero(~alive)),
        mean_terminal_wealth=float(np.mean(X)),
        running=running,
        extra={"out_of_range_lookups": oob},
    )


def simulate_dual_state(
    t0: float,
    y0: float,
    u_policy: Callable,
    market: MarketModel,
    bundle: ConjugateBundle,
    cfg: SimConfig,
) -> SimReport:
    """Estimate the dual functional E[int tildeU1*(s, Y_s, u_s) ds + tildeU2(Y_T)].

    The geometric part of dY = -u dt - (b/sigma) Y dW is stepped exactly in
    log space; the control drift is explicit Euler.  Paths that leave
    (0, inf) are rejected and counted (the admissible class requires Y > 0);
    more than 1% rejections raises ExcessiveRejection.
    """
    if y0 <= 0:
        raise SimulationError("y0 must be positive")
    T = market.T
    n_steps = cfg.check_budget(T - t0)
    n = cfg.n_paths
    dt = cfg.dt_sim
    sq = math.sqrt(dt)

    Y = np.full(n, float(y0))
    ok = np.ones(n, dtype=bool)
    J = np.zeros(n)
    with np.errstate(divide="ignore", over="ignore"):
        for k in range(n_steps):
            t = t0 + k * dt
            u = np.asarray(u_policy(t, Y), dtype=float)
            J[ok] += np.asarray(bundle.u1_star_tilde(t, Y, np.maximum(u, 0.0)), dtype=float)[ok] * dt
            Z = step_normals(cfg.seed, k, n, antithetic=cfg.antithetic)
            th = float(market.theta(t))
            Y = Y * np.exp(-th * sq * Z - 0.5 * th * th * dt) - u * dt
            bad = ok & (Y <= 0)
            if np.any(bad):
                ok &= ~bad
                Y[bad] = 1.0      # placeholder; excluded from the estimate
        J[ok] += np.asarray(bundle.U2_tilde(Y), dtype=float)[ok]

    n_rej = int(np.count_nonzero(~ok))
    if n_rej > 0.01 * n:
        raise ExcessiveRejection(f"{n_rej}/{n} dual paths left (0, inf)")
    est, se, running = _finalize(J, cfg, mask=ok)
    return SimReport(estimate=est, std_error=se, n_paths=n, n_rejected=n_rej,
                     mean_terminal_wealth=float(np.mean(Y[ok])) if n_rej < n else float("nan"),
                     running=running)


def paired_supermartingale(
    t0: float,
    x0: float,
    y0: float,
    primal: PrimalSolution,
    market: MarketModel,
    cfg: SimConfig,
) -> SimReport:
    """MC estimate of E[X_T Y_T + int c_s Y_s ds] on shared noise.

    X follows the recovered feedback policy, Y the uncontrolled dual state
    (u = 0), both driven by the same Brownian increments.  The duality
    argument makes this expectation <= x0 y0 for any admissible pair.
    """
    T = market.T
    n_steps = cfg.check_budget(T - t0)
    n = cfg.n_paths
    dt = cfg.dt_sim
    sq = math.sqrt(dt)
    tables = _FeedbackTables(primal)

    X = np.full(n, float(x0))
    Y = np.full(n, float(y0))
    alive = X > 0
    acc = np.zeros(n)
    for k in range(n_steps):
        t = t0 + k * dt
        crow, prow = tables.rows(t)
        cr, pr = tables.lookup2(crow, prow, X)
        c = cr * X
        pi = pr * X
        c[~alive] = 0.0
        pi[~alive] = 0.0
        acc += c * Y * dt
        Z = step_normals(cfg.seed, k, n, antithetic=cfg.antithetic)
        b = float(market.drift(t))
        s = float(market.vol(t))
        th = b / s
        X = X + (b * pi - c) * dt + s * pi * sq * Z
        Y = Y * np.exp(-th * sq * Z - 0.5 * th * th * dt)
        X[alive & (X <= 0)] = 0.0
        alive &= X > 0
    acc += X * Y
    est, se, running = _finalize(acc, cfg)
    return SimReport(estimate=est, std_error=se, n_paths=n,
                     n_absorbed=int(np.count_nonzero(~alive)),
                     mean_terminal_wealth=float(np.mean(X)), running=running,
                     extra={"bound": x0 * y0})


# Forked workers inherit the job context as a module global, which avoids
# pickling model closures; each job is an independent deterministic
# simulation, so results do not depend on worker count or completion order.
_JOB_CTX: dict = {}


def _policy_job(i: int):
    jobs, (t0, x0, primal, market, utility, cfg) = _JOB_CTX["jobs"], _JOB_CTX["args"]
    name, gc, gp = jobs[i]
    rep = simulate_closed_loop(t0, x0, primal, market, utility, cfg, gamma_c=gc, gamma_pi=gp)
    return i, name, gc, gp, rep


def _run_jobs(jobs, args, n_workers: int):
    if n_workers <= 1 or len(jobs) == 1:
        _JOB_CTX["jobs"], _JOB_CTX["args"] = jobs, args
        out = [_policy_job(i) for i in range(len(jobs))]
    else:
        import multiprocessing as mp
        from concurrent.futures import ProcessPoolExecutor

        _JOB_CTX["jobs"], _JOB_CTX["args"] = jobs, args
        try:
            ctx = mp.get_context("fork")
            with ProcessPoolExecutor(max_workers=min(n_workers, len(jobs)), mp_context=ctx) as ex:
                out = list(ex.map(_policy_job, range(len(jobs))))
        except (ValueError, OSError):
            with ThreadPoolExecutor(max_workers=n_workers) as ex:
                out = list(ex.map(_policy_job, range(len(jobs))))
    out.sort(key=lambda r: r[0])
    return [(name, gc, gp, rep) for _, name, gc, gp, rep in out]


@dataclass
class CheckOutcome:
    name: str
    passed: bool
    estimate: float
    std_error: float
    reference: float
    detail: str = ""


@dataclass
class TestReport:
    checks: list

    @property
    def passed(self) -> bool:
        return all(c.passed for c in self.checks)

    def to_dict(self) -> dict:
        return {
            "passed": self.passed,
            "checks": [
                {"name": c.name, "passed": c.passed, "estimate": c.estimate,
                 "std_error": c.std_error, "reference": c.reference, "detail": c.detail}
                for c in self.checks
            ],
        }


def value_at(primal: PrimalSolution, t0: float, x0: float) -> float:
    """Recovered V(t0, x0), interpolated linearly in log-wealth."""
    n = int(round((t0 - primal.t[0]) / (primal.t[1] - primal.t[0])))
    if abs(primal.t[n] - t0) > 1e-9:
        raise SimulationError("t0 must be a primal grid time")
    return float(np.interp(np.log(x0), np.log(primal.x), primal.V[n]))


def verification_test(
    t0: float,
    x0: float,
    primal: PrimalSolution,
    market: MarketModel,
    utility: UtilityModel,
    cfg: SimConfig,
    perturbations: Sequence[tuple[float, float]] = (),
    reference: float | None = None,
) -> TestReport:
    """Executable verification theorem.

    (a) the closed-loop estimate under the recovered feedback maps must sit
    within 2 standard errors of V(t0, x0); (b) every perturbed policy
    (consumption scaled by gamma_c, portfolio by gamma_pi) must estimate at
    most V(t0, x0) + 2 SE, since any admissible control is dominated.
    Perturbed runs are independent simulations and run on cfg.n_workers
    threads; thread count does not affect any estimate.
    """
    ref = value_at(primal, t0, x0) if reference is None else float(reference)
    jobs: list[tuple[str, float, float]] = [("optimal", 1.0, 1.0)]
    for (gc, gp) in perturbations:
        if (gc, gp) != (1.0, 1.0):
            jobs.append((f"perturbed_c{gc}_pi{gp}", gc, gp))

    results = _run_jobs(jobs, (t0, x0, primal, market, utility, cfg), cfg.n_workers)

    checks = []
    for name, gc, gp, rep in results:
        if (gc, gp) == (1.0, 1.0):
            ok = abs(rep.estimate - ref) <= 2.0 * rep.std_error
            detail = f"|est - V| = {abs(rep.estimate - ref):.3e} vs 2SE = {2 * rep.std_error:.3e}"
        else:
            ok = rep.estimate <= ref + 2.0 * rep.std_error
            detail = f"est - V = {rep.estimate - ref:.3e} vs 2SE = {2 * rep.std_error:.3e}"
        checks.append(CheckOutcome(name, bool(ok), rep.estimate, rep.std_error, ref, detail))
    return TestReport(checks=checks)
