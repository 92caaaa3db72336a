"""Exception types shared across the package."""


class PersuadriveError(Exception):
    """Base class for all library errors."""


class NonPositiveDefinite(PersuadriveError):
    """A penalty matrix that must be symmetric positive definite is not."""


class W1W4Order(PersuadriveError):
    """Tracking weight is smaller than the risk-aversion weight (w1 < w4)."""


class SteeringOutOfDomain(PersuadriveError):
    """|steering angle| >= pi/2, outside the kinematic model's domain."""


class Overflow(PersuadriveError):
    """Cost exponent exceeded the configured cap; weights are mis-scaled."""


class SingularSystem(PersuadriveError):
    """Best-response system matrix is singular or nearly so."""


class NonConvergentIntegral(PersuadriveError):
    """Gaussian factor does not dominate the goal quadratic; the
    belief-weighted integral would diverge."""


class DegenerateOmegaGradient(PersuadriveError):
    """Predicted obstacle state coincides with the belief mean, so the
    conservativeness norm has no defined linearization direction."""


class PoorFit(PersuadriveError):
    """Structural coefficient fit residual exceeded its bound."""


class Infeasible(PersuadriveError):
    """The fixed initial state violates a hard constraint; no plan exists."""


class HorizonMismatch(PersuadriveError):
    """A supplied plan is shorter than the horizon that consumes it."""


class InsufficientOverlap(PersuadriveError):
    """Two plans share too few common time steps to compare."""


class InvariantViolation(PersuadriveError):
    """A belief/weight update could not be clamped back to a valid range."""


class SafetyBreach(PersuadriveError):
    """An executed simulation state violated the pairwise clearance bound."""

    def __init__(self, message, log=None):
        super().__init__(message)
        self.log = log


class NoConvergence(PersuadriveError):
    """Adaptive quadrature hit its subdivision cap before reaching tol."""
