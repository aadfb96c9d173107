"""Closed-form Merton references used as verification oracles.

For U1 = c^p/p, U2 = a_T x^p/p with constant drift b and volatility sigma,
the dual equation is linear (the optimal dual control is u = 0) and the
dual value function separates as W(t, y) = ((1-p)/p) D(t) y^{-q} with

    q = p / (1 - p),
    kappa = q (q + 1) (b / sigma)^2 / 2,
    D(t) = (e^{kappa (T-t)} - 1) / kappa + a_T^{1/(1-p)} e^{kappa (T-t)}.

The primal value is V(t, x) = D(t)^{1-p} x^p / p, optimal consumption is
c*(t, x) = x / D(t) and the optimal risky amount is the constant fraction
b / (sigma^2 (1 - p)) of wealth.

The same separation works when the running utility also carries a wealth
term a_x x^p/p: the PDE then collapses to a scalar nonlinear ODE for the
time coefficient, with no elementary closed form.  ``power_ode_coefficient``
integrates that ODE to near machine accuracy and serves as an independent
reference for the wealth-utility test cases.  The infinite-horizon
consumption problem with discount beta has value K x^p/p with K given by
``infinite_horizon_constant``.
"""

from __future__ import annotations

import numpy as np
from scipy.integrate import solve_ivp

__all__ = [
    "merton_kappa",
    "merton_D",
    "dual_value_W",
    "primal_value_V",
    "consumption_rate",
    "risky_fraction",
    "power_ode_coefficient",
    "infinite_horizon_constant",
]


def merton_kappa(p: float, b: float, sigma: float) -> float:
    q = p / (1.0 - p)
    return 0.5 * q * (q + 1.0) * (b / sigma) ** 2


def merton_D(t, p: float, b: float, sigma: float, T: float, a_T: float = 0.0,
             a_c: float = 1.0):
    """Time coefficient D(t) of the separable Merton solution."""
    kappa = merton_kappa(p, b, sigma)
    s = T - np.asarray(t, dtype=float)
    ek = np.exp(kappa * s)
    run = a_c ** (1.0 / (1.0 - p)) * (ek - 1.0) / kappa if a_c > 0 else 0.0
    tail = a_T ** (1.0 / (1.0 - p)) * ek if a_T > 0 else 0.0
    return run + tail


def dual_value_W(t, y, p: float, b: float, sigma: float, T: float, a_T: float = 0.0,
                 a_c: float = 1.0):
    """W(t, y) = ((1-p)/p) D(t) y^{-p/(1-p)}."""
    q = p / (1.0 - p)
    D = merton_D(t, p, b, sigma, T, a_T, a_c)
    return (1.0 - p) / p * D * np.power(np.asarray(y, dtype=float), -q)


def primal_value_V(t, x, p: float, b: float, sigma: float, T: float, a_T: float = 0.0,
                   a_c: float = 1.0):
    """V(t, x) = D(t)^{1-p} x^p / p."""
    D = merton_D(t, p, b, sigma, T, a_T, a_c)
    return np.power(D, 1.0 - p) * np.power(np.asarray(x, dtype=float), p) / p


def consumption_rate(t, x, p: float, b: float, sigma: float, T: float, a_T: float = 0.0,
                     a_c: float = 1.0):
    """Optimal consumption c*(t, x) = a_c^{1/(1-p)} x / D(t)."""
    D = merton_D(t, p, b, sigma, T, a_T, a_c)
    return a_c ** (1.0 / (1.0 - p)) * np.asarray(x, dtype=float) / D


def risky_fraction(p: float, b: float, sigma: float) -> float:
    """Optimal risky amount per unit wealth, b / (sigma^2 (1-p))."""
    return b / (sigma * sigma * (1.0 - p))


def power_ode_coefficient(
    p: float,
    b,
    sigma,
    T: float,
    a_c=1.0,
    a_x=0.0,
    a_T: float = 0.0,
    t_eval=None,
    rtol: float = 1e-11,
    atol: float = 1e-13,
):
    """phi(t) with W(t,y) = phi(t) y^{-q} for power-power utilities.

    Plugging the separable ansatz into the dual HJB collapses it to

        phi' = -kappa(t) phi - ((1-p)/p) a_c(t)^{1/(1-p)} - (a_x(t) q^p / p) phi^p,
        phi(T) = ((1-p)/p) a_T^{1/(1-p)},

    integrated backward to near machine accuracy.  ``a_c``/``a_x`` and the
    market coefficients ``b``/``sigma`` may be scalars or callables of t.
    Returns (ts, phi) with ts ascending.
    """
    q = p / (1.0 - p)
    bf = b if callable(b) else (lambda t, v=float(b): v)
    sf = sigma if callable(sigma) else (lambda t, v=float(sigma): v)
    ac = a_c if callable(a_c) else (lambda t, v=float(a_c): v)
    ax = a_x if callable(a_x) else (lambda t, v=float(a_x): v)

    def rhs(t, phi):
        ph = max(phi[0], 0.0)
        kappa = merton_kappa(p, float(bf(t)), float(sf(t)))
        return [-kappa * ph - (1.0 - p) / p * ac(t) ** (1.0 / (1.0 - p))
                - ax(t) * q ** p * ph ** p / p]

    phi_T = (1.0 - p) / p * a_T ** (1.0 / (1.0 - p)) if a_T > 0 else 0.0
    if t_eval is None:
        t_eval = np.linspace(0.0, T, 201)
    t_eval = np.asarray(t_eval, dtype=float)
    sol = solve_ivp(rhs, (T, 0.0), [phi_T], t_eval=t_eval[::-1],
                    rtol=rtol, atol=atol, method="DOP853", max_step=T / 50.0)
    if not sol.success:
        raise RuntimeError(f"phi-ODE integration failed: {sol.message}")
    return t_eval, sol.y[0][::-1]


def infinite_horizon_constant(beta: float, p: float, b: float, sigma: float) -> float:
    """K with V(x) = K x^p/p for the discounted infinite-horizon problem.

    Requires beta > gamma_M = p b^2 / (2 sigma^2 (1-p)); then
    K = ((beta - gamma_M) / (1-p))^{-(1-p)}.
    """
    gamma_m = p * b * b / (2.0 * sigma * sigma * (1.0 - p))
    if beta <= gamma_m:
        raise ValueError("discount too small: beta <= Merton growth rate")
    return ((beta - gamma_m) / (1.0 - p)) ** (-(1.0 - p))
