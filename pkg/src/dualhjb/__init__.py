"""dualhjb: duality pipeline for investment-consumption problems with
current utility on the wealth.

The primal problem maximizes E[int U1(t, c_t, X_t) dt + U2(X_T)] over
admissible consumption/investment strategies under a no-bankruptcy
constraint; its HJB equation is fully nonlinear and degenerate.  The
package instead solves the *semilinear* dual HJB equation for the dual
value function W, recovers the primal value function and the optimal
feedback maps by Legendre transform, and verifies optimality by Monte
Carlo simulation of the closed-loop wealth process.

Modules:
  model         market/preference data and validation
  transforms    Legendre conjugates (analytic + numeric)
  dual_solver   implicit FD solver for the dual equation on a log grid
  primal        inf-transform recovery of V and the feedback maps
  simulate      reproducible Monte Carlo verification engine
  applications  random-horizon rewriting, liquid/illiquid reduction
  merton        closed-form references used as oracles
  cli           command-line pipelines and artifact emission
"""

__version__ = "0.1.0"

from .model import (  # noqa: F401
    InadaCase,
    MarketModel,
    UtilityModel,
    ValidationReport,
    constant_curve,
    piecewise_linear_curve,
    power_power_utility,
    register_utility,
    separable_utility,
    validate_model,
)
from .transforms import (  # noqa: F401
    ConjugateBundle,
    build_bundle,
    conjugate_U2,
    conjugate_c_U1,
    discrete_inf_conjugate,
    discrete_sup_conjugate,
    double_conjugate_U1,
    inverse_marginal_x,
    optimal_c,
)
from .dual_solver import (  # noqa: F401
    DualSolution,
    LogGrid,
    boundary_values,
    check_dual_invariants,
    clamp_gradient,
    solve_dual,
    step_backward,
    terminal_slice,
)
from .primal import (  # noqa: F401
    PrimalSolution,
    check_primal_invariants,
    consumption_feedback,
    legendre_min,
    portfolio_feedback,
    primal_hjb_residual,
    recover,
    recover_derivatives,
    weak_duality_gap,
)
from .simulate import (  # noqa: F401
    SimConfig,
    SimReport,
    TestReport,
    paired_supermartingale,
    simulate_closed_loop,
    simulate_dual_state,
    step_normals,
    value_at,
    verification_test,
)
from .applications import (  # noqa: F401
    ExponentialArrival,
    IlliquidParams,
    IlliquidReduction,
    KVResult,
    PowerRunning,
    RandomHorizonSpec,
    exponential_horizon,
    illiquid_reduction,
    kv_fixed_point,
    liquidation_value,
    random_horizon_equivalence,
    random_horizon_transform,
)
from . import merton  # noqa: F401
