"""Compiled inner loops for the Monte Carlo engine.

The per-step work (table lookup, feedback evaluation, utility accrual,
Euler update, absorption) is fused into one pass over the path vector.
Noise generation stays outside in numpy's Philox streams, so results are
bit-identical to a pure-numpy evaluation of the same expressions and
independent of threading.

``fused_power_step`` handles the power-family running utility inline;
``controls_step``/``euler_step`` split the work when the caller needs the
control vectors (custom utilities, path dumps).
"""

from __future__ import annotations

import math

import numpy as np
from numba import njit

__all__ = ["fused_power_step", "controls_step", "euler_step"]


@njit(cache=True)
def fused_power_step(X, alive, J, Z, crow, prow, lx0, inv_dlx,
                     gamma_c, gamma_pi, b, s, dt, sqdt, ac, ax, p):
    """One closed-loop step with U1 = ac c^p/p + ax x^p/p accrued inline.

    Updates X, alive, J in place; returns the number of out-of-range table
    lookups (clamped to the edge ratios).
    """
    n = X.shape[0]
    n_x = crow.shape[0]
    oob = 0
    fmax = n_x - 1.000000000001
    inv_p = 1.0 / p
    for i in range(n):
        if not alive[i]:
            continue
        x = X[i]
        f = (math.log(x) - lx0) * inv_dlx
        if f < 0.0:
            f = 0.0
            oob += 1
        elif f > fmax:
            f = fmax
            oob += 1
        j = int(f)
        w = f - j
        cr = crow[j] * (1.0 - w) + crow[j + 1] * w
        pr = prow[j] * (1.0 - w) + prow[j + 1] * w
        c = gamma_c * cr * x
        pi = gamma_pi * pr * x
        u = 0.0
        if p == 0.5:
            if ac > 0.0:
                u += ac * math.sqrt(c)
            if ax > 0.0:
                u += ax * math.sqrt(x)
        else:
            if ac > 0.0:
                u += ac * c ** p
            if ax > 0.0:
                u += ax * x ** p
        J[i] += u * inv_p * dt
        xn = x + (b * pi - c) * dt + s * pi * sqdt * Z[i]
        if xn <= 0.0:
            xn = 0.0
            alive[i] = False
        X[i] = xn
    return oob


@njit(cache=True)
def controls_step(X, alive, crow, prow, lx0, inv_dlx, gamma_c, gamma_pi, c_out, pi_out):
    """Fill the control vectors from the ratio tables without advancing X."""
    n = X.shape[0]
    n_x = crow.shape[0]
    oob = 0
    fmax = n_x - 1.000000000001
    for i in range(n):
        if not alive[i]:
            c_out[i] = 0.0
            pi_out[i] = 0.0
            continue
        x = X[i]
        f = (math.log(x) - lx0) * inv_dlx
        if f < 0.0:
            f = 0.0
            oob += 1
        elif f > fmax:
            f = fmax
            oob += 1
        j = int(f)
        w = f - j
        c_out[i] = gamma_c * (crow[j] * (1.0 - w) + crow[j + 1] * w) * x
        pi_out[i] = gamma_pi * (prow[j] * (1.0 - w) + prow[j + 1] * w) * x
    return oob


@njit(cache=True)
def euler_step(X, alive, c, pi, Z, b, s, dt, sqdt):
    """Advance X one Euler step and absorb at zero."""
    n = X.shape[0]
    for i in range(n):
        if not alive[i]:
            continue
        xn = X[i] + (b * pi[i] - c[i]) * dt + s * pi[i] * sqdt * Z[i]
        if xn <= 0.0:
            xn = 0.0
            alive[i] = False
        X[i] = xn
