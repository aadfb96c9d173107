"""Merton benchmark: solve the dual equation and compare every stage to the
closed form.

With U1 = c^p/p and U2 = x^p/p the optimal dual control is u = 0, the dual
equation is linear, and W(t, y) = ((1-p)/p) D(t) y^{-p/(1-p)} with an
explicit D.  This script solves the PDE numerically, recovers the primal
value and feedback maps, and prints the errors against the closed form.
"""

import numpy as np

from dualhjb import (
    LogGrid, MarketModel, power_power_utility, recover, solve_dual,
)
from dualhjb import merton

p, b, sigma, T, a_T = 0.5, 0.3, 0.5, 1.0, 1.0

market = MarketModel(b=b, sigma=sigma, T=T)
utility = power_power_utility(p, a_c=1.0, a_x=0.0, a_T=a_T)
grid = LogGrid(y_min=1e-3, y_max=1e3, n_y=200, n_t=400, T=T)

sol = solve_dual(market, utility, grid)
primal = recover(sol, utility, market)

print(f"dual solve: {grid.n_t} steps x {grid.n_y} nodes, "
      f"max PDE residual {sol.diagnostics.max_residual:.2e}")

mask_y = (sol.y >= 0.2) & (sol.y <= 5.0)
Wex = merton.dual_value_W(sol.t[:, None], sol.y[None, :], p, b, sigma, T, a_T)
err_W = np.abs(sol.W[:, mask_y] - Wex[:, mask_y]) / Wex[:, mask_y]
print(f"dual value error on y in [0.2, 5]: max {err_W.max():.2e}")

Vex = merton.primal_value_V(primal.t[:, None], primal.x[None, :], p, b, sigma, T, a_T)
mask_x = (primal.x >= 0.25) & (primal.x <= 4.0)
err_V = np.abs(primal.V[:, mask_x] - Vex[:, mask_x]) / Vex[:, mask_x]
print(f"primal value error on x in [0.25, 4]: max {err_V.max():.2e}")

frac = merton.risky_fraction(p, b, sigma)
pi_frac = primal.Pi_feedback[:-1, mask_x] / primal.x[None, mask_x]
print(f"risky fraction: recovered {pi_frac.mean():.4f} vs closed form {frac}")

print("\n  t      W(t,1) numeric   W(t,1) exact")
j = np.argmin(np.abs(sol.y - 1.0))
for n in range(0, grid.n_t + 1, 80):
    print(f"  {sol.t[n]:.2f}   {sol.W[n, j]:14.6f}   {Wex[n, j]:12.6f}")
