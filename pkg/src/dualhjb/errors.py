"""Exception hierarchy shared by all dualhjb modules.

Every error that names a probe point or a grid node carries it in the
``point`` attribute so callers (and test harnesses) can report exactly
where a contract was violated.
"""

from __future__ import annotations


class DualhjbError(Exception):
    """Base class for all package errors."""

    def __init__(self, message: str, point=None):
        if point is not None:
            message = f"{message} (at {point!r})"
        super().__init__(message)
        self.point = point


# ---------------------------------------------------------------------------
# model
# ---------------------------------------------------------------------------

class ModelError(DualhjbError):
    pass


class NonPositiveVolatility(ModelError):
    pass


class NonPositiveDrift(ModelError):
    pass


class ConcavityViolation(ModelError):
    pass


class GrowthBoundViolation(ModelError):
    pass


class NormalizationViolation(ModelError):
    pass


# ---------------------------------------------------------------------------
# transforms
# ---------------------------------------------------------------------------

class TransformError(DualhjbError):
    pass


class UnboundedConjugate(TransformError):
    """The supremum in a Legendre transform diverges on the search domain."""


class RootBracketFailure(TransformError):
    """Monotone bracketing of a marginal-utility equation failed."""


class NoInteriorMinimizer(TransformError):
    """The dual-control minimizer sits on the boundary u = 0."""


# ---------------------------------------------------------------------------
# dual solver
# ---------------------------------------------------------------------------

class SolverError(DualhjbError):
    pass


class FixedPointDivergence(SolverError):
    """Semilinear source iteration exhausted its budget; refine dt."""


class NonConvexSlice(SolverError):
    pass


class SaturatedConjugate(SolverError):
    """Terminal conjugate exceeds the overflow sentinel; shrink the grid."""


class BoundaryLayerWarning(UserWarning):
    """Interior solution is sensitive to the left truncation point."""


# ---------------------------------------------------------------------------
# primal recovery
# ---------------------------------------------------------------------------

class PrimalError(DualhjbError):
    pass


class ArgminAtBoundary(PrimalError):
    """x falls outside the wealth range resolved by the dual gradient."""


class OutOfRange(PrimalError):
    pass


class DegenerateCurvature(PrimalError):
    pass


class NegativeGapBeyondTolerance(PrimalError):
    pass


# ---------------------------------------------------------------------------
# simulation
# ---------------------------------------------------------------------------

class SimulationError(DualhjbError):
    pass


class BudgetExceeded(SimulationError):
    pass


class NaNPath(SimulationError):
    pass


class ExcessiveRejection(SimulationError):
    pass


# ---------------------------------------------------------------------------
# applications
# ---------------------------------------------------------------------------

class ApplicationError(DualhjbError):
    pass


class NegativeWeight(ApplicationError):
    pass


class DiscountTooSmall(ApplicationError):
    pass


class QuadratureUnstable(ApplicationError):
    pass


class NoConvergence(ApplicationError):
    """Fixed-point iteration did not converge; carries the trace."""

    def __init__(self, message: str, trace=None):
        super().__init__(message)
        self.trace = trace or []


# ---------------------------------------------------------------------------
# cli / io
# ---------------------------------------------------------------------------

class CliError(DualhjbError):
    exit_code = 6


class ConfigParseError(CliError):
    exit_code = 2


class ModelValidationError(CliError):
    exit_code = 3


class UpstreamArtifactMissing(CliError):
    exit_code = 4
