"""Market and preference data for the investment-consumption problem.

The market is a single risky asset with deterministic drift ``b(t)`` and
volatility ``sigma(t)`` (riskless rate normalized to zero), traded over a
finite horizon ``[0, T]``.  Preferences are a running utility
``U1(t, c, x)`` on consumption *and wealth*, plus a terminal utility
``U2(x)``, both concave nondecreasing, normalized to vanish at the origin
and dominated by ``K (1 + c^p + x^p)`` for some growth exponent
``p in (0, 1)``.

All model objects are immutable after construction and safe to share
across threads.  ``validate_model`` probes the analytic assumptions by
finite sampling and is required to pass before any solver call.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from .errors import (
    ConcavityViolation,
    GrowthBoundViolation,
    ModelError,
    NonPositiveDrift,
    NonPositiveVolatility,
    NormalizationViolation,
)

__all__ = [
    "MarketModel",
    "UtilityModel",
    "InadaCase",
    "PowerFamily",
    "SeparableParts",
    "ValidationReport",
    "constant_curve",
    "piecewise_linear_curve",
    "power_power_utility",
    "separable_utility",
    "validate_model",
    "register_utility",
    "get_registered_utility",
    "default_probe_grid",
]

# Finite-difference step (relative) for derivative fallbacks.
FD_REL_STEP = 1e-6
# Tolerance for discrete concavity checks (second differences).
CONCAVITY_TOL = 1e-8


# ---------------------------------------------------------------------------
# coefficient curves
# ---------------------------------------------------------------------------

def constant_curve(value: float) -> Callable:
    """Wrap a constant into a vectorized curve ``t -> value``."""
    v = float(value)

    def curve(t):
        return np.full_like(np.asarray(t, dtype=float), v) if np.ndim(t) else v

    curve.constant_value = v  # type: ignore[attr-defined]
    return curve


def piecewise_linear_curve(knots_t: Sequence[float], knots_v: Sequence[float]) -> Callable:
    """Piecewise-linear curve through ``(t_i, v_i)``, constant beyond the ends."""
    ts = np.asarray(knots_t, dtype=float)
    vs = np.asarray(knots_v, dtype=float)
    if ts.ndim != 1 or ts.shape != vs.shape or len(ts) < 2:
        raise ModelError("piecewise-linear curve needs >= 2 matching knots")
    if np.any(np.diff(ts) <= 0):
        raise ModelError("piecewise-linear knots must be strictly increasing in t")

    def curve(t):
        return np.interp(t, ts, vs)

    return curve


def _as_curve(value) -> Callable:
    if callable(value):
        return value
    return constant_curve(float(value))


def _curve_constant(curve: Callable) -> float | None:
    """Constant value of a curve if it is one, else None."""
    return getattr(curve, "constant_value", None)


# ---------------------------------------------------------------------------
# market model
# ---------------------------------------------------------------------------

@dataclass(frozen=True, eq=False)
class MarketModel:
    """Deterministic market curves and derived Sharpe quantities.

    Parameters
    ----------
    b : float or callable
        Drift curve t -> b(t) > 0, units 1/time.
    sigma : float or callable
        Volatility curve t -> sigma(t) > 0, units 1/sqrt(time).
    T : float
        Horizon, time units.
    holder_exponent : float
        Hölder exponent certified by the caller for b and sigma, in (0, 1].
        Not verifiable from samples; recorded as model metadata.
    """

    b: Callable = 0.3
    sigma: Callable = 0.5
    T: float = 1.0
    holder_exponent: float = 1.0

    def __post_init__(self):
        object.__setattr__(self, "b", _as_curve(self.b))
        object.__setattr__(self, "sigma", _as_curve(self.sigma))
        if not (self.T > 0):
            raise ModelError("horizon T must be positive")
        if not (0 < self.holder_exponent <= 1):
            raise ModelError("holder_exponent must lie in (0, 1]")

    def drift(self, t):
        return self.b(t)

    def vol(self, t):
        return self.sigma(t)

    def theta(self, t):
        """Sharpe ratio b(t)/sigma(t)."""
        return np.asarray(self.b(t)) / np.asarray(self.sigma(t))

    def lam(self, t):
        """Dual diffusion coefficient b(t)^2 / (2 sigma(t)^2)."""
        th = self.theta(t)
        return 0.5 * th * th


# ---------------------------------------------------------------------------
# utility model
# ---------------------------------------------------------------------------

class InadaCase(enum.Enum):
    INADA = "inada"                 # U1 strictly concave increasing in c, Inada in c
    NO_CONSUMPTION = "no_consumption"  # dU1/dc identically zero


@dataclass(frozen=True, eq=False)
class PowerFamily:
    """Structure marker for U1 = a_c(t) c^p/p + a_x(t) x^p/p, U2 = a_T x^p/p.

    Coefficients may depend on time (this is what random-horizon composites
    produce); ``a_c0``/``a_x0`` hold the constant values when there is no
    time dependence, which unlocks the constant-coefficient oracle path.
    """

    p: float
    a_c: Callable
    a_x: Callable
    a_T: float

    @property
    def constant(self) -> bool:
        return _curve_constant(self.a_c) is not None and _curve_constant(self.a_x) is not None

    @property
    def a_c0(self) -> float | None:
        return _curve_constant(self.a_c)

    @property
    def a_x0(self) -> float | None:
        return _curve_constant(self.a_x)


@dataclass(frozen=True, eq=False)
class SeparableParts:
    """U1(t,c,x) = c_part(t,c) + x_part(t,x), both vanishing at 0.

    ``c_power_coef`` marks an analytic consumption part a_c(t) c^p / p;
    when present the conjugate in c and the optimal consumption map are
    closed-form.  ``x_part`` must accept vectorized x.
    """

    c_part: Callable | None = None
    x_part: Callable | None = None
    c_part_dc: Callable | None = None
    x_part_dx: Callable | None = None
    c_power_coef: Callable | None = None


@dataclass(frozen=True, eq=False)
class UtilityModel:
    """Running and terminal utilities with derivative accessors.

    ``U1_c`` etc. are analytic partial derivatives where available; when a
    derivative is missing, a central finite-difference fallback is used and
    flagged in validation reports.  ``growth_case`` records which of the
    coercivity alternatives holds: "running" for
    lim_{c->inf} U1(t,c,0) = +inf near T, "terminal" for
    lim_{x->inf} U2(x) = +inf.  ``value_offset`` carries the deterministic
    additive shift C(t) produced when a composite utility is renormalized to
    vanish at the origin; the shifted problem has the same optimizers and
    its value differs by exactly C(t).
    """

    U1: Callable                      # (t, c, x) -> value
    U2: Callable                      # (x,) -> value
    p: float
    K: float
    inada_case: InadaCase
    U1_c: Callable | None = None
    U1_x: Callable | None = None
    U1_cc: Callable | None = None
    U2_prime: Callable | None = None
    separable: SeparableParts | None = None
    power: PowerFamily | None = None
    growth_case: frozenset = frozenset()
    value_offset: Callable | None = None
    label: str = "custom"

    def __post_init__(self):
        if not (0 < self.p < 1):
            raise ModelError("growth exponent p must lie in (0, 1)")
        if not (self.K > 0):
            raise ModelError("growth constant K must be positive")

    @property
    def q(self) -> float:
        """Dual growth exponent p / (1 - p)."""
        return self.p / (1.0 - self.p)

    def u1_c(self, t, c, x):
        """dU1/dc, analytic or central finite differences."""
        if self.U1_c is not None:
            return self.U1_c(t, c, x)
        h = FD_REL_STEP * (abs(c) + 1.0)
        cm = np.maximum(c - h, 0.0)
        return (self.U1(t, c + h, x) - self.U1(t, cm, x)) / (c + h - cm)

    def u1_x(self, t, c, x):
        if self.U1_x is not None:
            return self.U1_x(t, c, x)
        h = FD_REL_STEP * (abs(x) + 1.0)
        xm = np.maximum(x - h, 0.0)
        return (self.U1(t, c, x + h) - self.U1(t, c, xm)) / (x + h - xm)

    def u2_prime(self, x):
        if self.U2_prime is not None:
            return self.U2_prime(x)
        h = FD_REL_STEP * (abs(x) + 1.0)
        xm = np.maximum(x - h, 0.0)
        return (self.U2(x + h) - self.U2(xm)) / (x + h - xm)

    @property
    def has_analytic_derivatives(self) -> bool:
        return self.U1_c is not None


# ---------------------------------------------------------------------------
# built-in families
# ---------------------------------------------------------------------------

def _power_value(coef, p, z):
    """coef * z^p / p with coef possibly 0 and z >= 0 array-safe."""
    if np.ndim(coef) == 0 and coef == 0.0:
        return np.zeros_like(np.asarray(z, dtype=float)) if np.ndim(z) else 0.0
    z = np.asarray(z, dtype=float)
    zp = np.sqrt(z) if p == 0.5 else np.power(z, p)
    return coef * zp / p


def power_power_utility(
    p: float,
    a_c=1.0,
    a_x=0.0,
    a_T: float = 0.0,
    K: float | None = None,
    label: str | None = None,
) -> UtilityModel:
    """Built-in family U1 = a_c(t) c^p/p + a_x(t) x^p/p, U2 = a_T x^p/p.

    ``a_c`` and ``a_x`` accept constants or time curves (nonnegative);
    ``a_T >= 0`` is constant.  Both Section-6 style applications and all
    closed-form oracles live in this family.
    """
    if not (0 < p < 1):
        raise ModelError("p must lie in (0, 1)")
    if a_T < 0:
        raise ModelError("a_T must be nonnegative")
    ac = _as_curve(a_c)
    ax = _as_curve(a_x)
    fam = PowerFamily(p=p, a_c=ac, a_x=ax, a_T=float(a_T))

    def U1(t, c, x):
        return _power_value(ac(t), p, c) + _power_value(ax(t), p, x)

    def U1_c(t, c, x):
        c = np.asarray(c, dtype=float)
        return ac(t) * np.power(c, p - 1.0)

    def U1_x(t, c, x):
        x = np.asarray(x, dtype=float)
        return ax(t) * np.power(x, p - 1.0)

    def U1_cc(t, c, x):
        c = np.asarray(c, dtype=float)
        return ac(t) * (p - 1.0) * np.power(c, p - 2.0)

    def U2(x):
        return _power_value(a_T, p, x)

    def U2_prime(x):
        x = np.asarray(x, dtype=float)
        return a_T * np.power(x, p - 1.0)

    # Probe the coefficient curves to classify the family.
    tp = np.linspace(0.0, 1.0, 17)
    ac_vals = np.asarray([ac(t) for t in tp], dtype=float)
    ax_vals = np.asarray([ax(t) for t in tp], dtype=float)
    if np.any(ac_vals < 0) or np.any(ax_vals < 0):
        raise ModelError("power family coefficients must be nonnegative")
    has_c = bool(np.any(ac_vals > 0))
    if K is None:
        K = float(max(ac_vals.max(), ax_vals.max() + a_T) / p + 1.0)

    growth = set()
    if has_c and ac_vals[-1] > 0:
        growth.add("running")
    if a_T > 0:
        growth.add("terminal")

    sep = SeparableParts(
        c_part=lambda t, c: _power_value(ac(t), p, c),
        x_part=lambda t, x: _power_value(ax(t), p, x),
        c_part_dc=U1_c if has_c else None,
        x_part_dx=lambda t, x: ax(t) * np.power(np.asarray(x, dtype=float), p - 1.0),
        c_power_coef=ac,
    )
    return UtilityModel(
        U1=U1,
        U2=U2,
        p=p,
        K=K,
        inada_case=InadaCase.INADA if has_c else InadaCase.NO_CONSUMPTION,
        U1_c=U1_c if has_c else None,
        U1_x=U1_x,
        U1_cc=U1_cc if has_c else None,
        U2_prime=U2_prime,
        separable=sep,
        power=fam,
        growth_case=frozenset(growth),
        label=label or f"power_power(p={p},a_T={a_T})",
    )


def separable_utility(
    p: float,
    K: float,
    c_power_coef=None,
    x_part: Callable | None = None,
    x_part_dx: Callable | None = None,
    U2: Callable | None = None,
    U2_prime: Callable | None = None,
    growth_case: Sequence[str] = ("running",),
    value_offset: Callable | None = None,
    label: str = "separable",
) -> UtilityModel:
    """Separable utility with a power consumption part and a custom wealth part.

    ``c_power_coef`` is the (possibly time-dependent) coefficient of
    ``c^p/p``; ``x_part(t, x)`` is a concave nondecreasing vectorized wealth
    term with ``x_part(t, 0) = 0``.  This is the shape the liquid/illiquid
    reduction produces, where the wealth term is a smoothed power coming
    from the liquidation operator.
    """
    cc = _as_curve(c_power_coef if c_power_coef is not None else 0.0)
    xp = x_part if x_part is not None else (lambda t, x: np.zeros_like(np.asarray(x, dtype=float)))
    U2f = U2 if U2 is not None else (lambda x: np.zeros_like(np.asarray(x, dtype=float)))

    def U1(t, c, x):
        return _power_value(cc(t), p, c) + xp(t, x)

    tp = np.linspace(0.0, 1.0, 9)
    cc_vals = np.asarray([cc(t) for t in tp], dtype=float)
    has_c = bool(np.any(cc_vals > 0))

    def U1_c(t, c, x):
        return cc(t) * np.power(np.asarray(c, dtype=float), p - 1.0)

    sep = SeparableParts(
        c_part=lambda t, c: _power_value(cc(t), p, c),
        x_part=xp,
        c_part_dc=U1_c if has_c else None,
        x_part_dx=x_part_dx,
        c_power_coef=cc,
    )
    return UtilityModel(
        U1=U1,
        U2=U2f,
        p=p,
        K=K,
        inada_case=InadaCase.INADA if has_c else InadaCase.NO_CONSUMPTION,
        U1_c=U1_c if has_c else None,
        U1_x=(lambda t, c, x: x_part_dx(t, x)) if x_part_dx is not None else None,
        U2_prime=U2_prime,
        separable=sep,
        power=None,
        growth_case=frozenset(growth_case),
        value_offset=value_offset,
        label=label,
    )


# Plugin registry for config-referenced custom utilities.  Users who
# register a factory certify Hölder regularity in t themselves; sampling
# cannot verify it.
_UTILITY_REGISTRY: dict[str, Callable] = {}


def register_utility(name: str, factory: Callable) -> None:
    _UTILITY_REGISTRY[name] = factory


def get_registered_utility(name: str) -> Callable:
    try:
        return _UTILITY_REGISTRY[name]
    except KeyError:
        raise ModelError(f"no registered utility named {name!r}") from None


# ---------------------------------------------------------------------------
# validation
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class CheckResult:
    name: str
    passed: bool
    detail: str = ""
    point: tuple | None = None


@dataclass(frozen=True)
class ValidationReport:
    checks: tuple
    fd_fallback: bool = False

    @property
    def passed(self) -> bool:
        return all(c.passed for c in self.checks)

    @property
    def failures(self):
        return [c for c in self.checks if not c.passed]

    def raise_if_failed(self) -> None:
        for c in self.checks:
            if not c.passed:
                raise _ERROR_BY_CHECK.get(c.name, ModelError)(c.detail or c.name, point=c.point)

    def __str__(self) -> str:
        lines = [f"[{'ok' if c.passed else 'FAIL'}] {c.name}" + (f": {c.detail}" if not c.passed else "")
                 for c in self.checks]
        return "\n".join(lines)


_ERROR_BY_CHECK = {
    "positive_volatility": NonPositiveVolatility,
    "positive_drift": NonPositiveDrift,
    "normalization": NormalizationViolation,
    "concavity_U1": ConcavityViolation,
    "concavity_U2": ConcavityViolation,
    "monotonicity_U1": ConcavityViolation,
    "monotonicity_U2": ConcavityViolation,
    "growth_bound": GrowthBoundViolation,
    "inada_marginal": ConcavityViolation,
    "coercivity_case": GrowthBoundViolation,
}


def default_probe_grid(T: float, n: int = 10) -> list[tuple[float, float, float]]:
    """Default probe set: n x n x n points in [0,T) x (0, 100]^2, geometric in c, x."""
    ts = np.linspace(0.0, T, n, endpoint=False)
    zs = np.geomspace(1e-2, 1e2, n)
    return [(float(t), float(c), float(x)) for t in ts for c in zs for x in zs]


def validate_model(
    market: MarketModel,
    utility: UtilityModel,
    probe_grid: Sequence[tuple[float, float, float]] | None = None,
) -> ValidationReport:
    """Probe the standing assumptions on a finite grid.

    Deterministic and side-effect free: two calls with the same inputs
    produce identical reports.  Concavity and monotonicity are checked by
    finite sampling (second differences against ``CONCAVITY_TOL``) since
    the assumptions are analytic and the utilities arrive as closures.
    """
    if probe_grid is None:
        probe_grid = default_probe_grid(market.T)
    if len(probe_grid) == 0:
        raise ModelError("probe grid must be nonempty")

    checks: list[CheckResult] = []

    # market curves, including the endpoint t = T
    ts = sorted({t for (t, _, _) in probe_grid} | {0.0, market.T})
    bad_sigma = next((t for t in ts if not (market.vol(t) > 0)), None)
    checks.append(CheckResult(
        "positive_volatility", bad_sigma is None,
        "" if bad_sigma is None else f"sigma(t) <= 0 at t={bad_sigma}", None if bad_sigma is None else (bad_sigma,)))
    bad_b = next((t for t in ts if not (market.drift(t) > 0)), None)
    checks.append(CheckResult(
        "positive_drift", bad_b is None,
        "" if bad_b is None else f"b(t) <= 0 at t={bad_b}", None if bad_b is None else (bad_b,)))
    if bad_sigma is None and bad_b is None:
        finite = all(np.isfinite(market.theta(t)) and np.isfinite(market.lam(t)) for t in ts)
        checks.append(CheckResult("finite_sharpe", finite, "" if finite else "theta or lambda not finite"))

    # normalizations U1(t,0,0) = 0 and U2(0) = 0
    bad_norm = None
    for t in ts[: len(ts) - 1]:  # U1 defined on [0, T)
        if abs(float(utility.U1(t, 0.0, 0.0))) > 1e-12:
            bad_norm = (t, 0.0, 0.0)
            break
    if bad_norm is None and abs(float(utility.U2(0.0))) > 1e-12:
        bad_norm = ("U2", 0.0)
    checks.append(CheckResult("normalization", bad_norm is None,
                              "" if bad_norm is None else "U1(t,0,0) or U2(0) != 0", bad_norm))

    # concavity / monotonicity of U1 in (c, x) and of U2, by second/first differences
    bad_cv = bad_mono = None
    for (t, c, x) in probe_grid:
        hc = 0.25 * c
        hx = 0.25 * x
        u0 = float(utility.U1(t, c, x))
        if float(utility.U1(t, c + hc, x)) + float(utility.U1(t, c - hc, x)) - 2 * u0 > CONCAVITY_TOL * (1 + abs(u0)):
            bad_cv = (t, c, x)
            break
        if float(utility.U1(t, c, x + hx)) + float(utility.U1(t, c, x - hx)) - 2 * u0 > CONCAVITY_TOL * (1 + abs(u0)):
            bad_cv = (t, c, x)
            break
        if float(utility.U1(t, c + hc, x)) < u0 - CONCAVITY_TOL * (1 + abs(u0)) or \
           float(utility.U1(t, c, x + hx)) < u0 - CONCAVITY_TOL * (1 + abs(u0)):
            bad_mono = (t, c, x)
            break
    checks.append(CheckResult("concavity_U1", bad_cv is None,
                              "" if bad_cv is None else "positive second difference of U1", bad_cv))
    checks.append(CheckResult("monotonicity_U1", bad_mono is None,
                              "" if bad_mono is None else "U1 decreasing", bad_mono))

    xs = sorted({x for (_, _, x) in probe_grid})
    bad_cv2 = bad_mono2 = None
    for x in xs:
        h = 0.25 * x
        u0 = float(utility.U2(x))
        if float(utility.U2(x + h)) + float(utility.U2(x - h)) - 2 * u0 > CONCAVITY_TOL * (1 + abs(u0)):
            bad_cv2 = (x,)
            break
        if float(utility.U2(x + h)) < u0 - CONCAVITY_TOL * (1 + abs(u0)):
            bad_mono2 = (x,)
            break
    checks.append(CheckResult("concavity_U2", bad_cv2 is None, "", bad_cv2))
    checks.append(CheckResult("monotonicity_U2", bad_mono2 is None, "", bad_mono2))

    # growth bound U1 + U2 <= K (1 + c^p + x^p)
    bad_growth = None
    for (t, c, x) in probe_grid:
        lhs = float(utility.U1(t, c, x)) + float(utility.U2(x))
        if lhs > utility.K * (1.0 + c ** utility.p + x ** utility.p) * (1 + 1e-12):
            bad_growth = (t, c, x)
            break
    checks.append(CheckResult("growth_bound", bad_growth is None,
                              "" if bad_growth is None else "U1 + U2 exceeds K(1+c^p+x^p)", bad_growth))

    # Inada behaviour of the consumption marginal
    if utility.inada_case is InadaCase.INADA:
        bad_inada = None
        t0, _, x0 = probe_grid[0]
        cs = np.geomspace(1e-8, 1e8, 9)
        vals = np.asarray([float(utility.u1_c(t0, c, x0)) for c in cs])
        if np.any(np.diff(vals) > 1e-12):
            bad_inada = (t0, "u1_c not decreasing", x0)
        elif not (vals[0] > 1e3 and vals[-1] < 1e-3):
            bad_inada = (t0, "u1_c limits not Inada-like", x0)
        checks.append(CheckResult("inada_marginal", bad_inada is None, "", bad_inada))

    # One of the coercivity alternatives must be declared, except for the
    # identically-zero model (admissible degenerate input; solvers short
    # circuit it to W == 0).
    is_zero = all(
        abs(float(utility.U1(t, c, x))) <= 1e-14 and abs(float(utility.U2(x))) <= 1e-14
        for (t, c, x) in probe_grid[:: max(1, len(probe_grid) // 16)]
    )
    checks.append(CheckResult(
        "coercivity_case", len(utility.growth_case) > 0 or is_zero,
        "" if (utility.growth_case or is_zero) else "neither running nor terminal coercivity declared"))

    return ValidationReport(checks=tuple(checks), fd_fallback=not utility.has_analytic_derivatives)
