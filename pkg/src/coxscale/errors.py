"""Exception hierarchy shared by all coxscale modules."""


class CoxScaleError(Exception):
    """Base class for every error raised by this package."""


class DomainError(CoxScaleError, ValueError):
    """An argument lies outside the mathematical domain of an operation."""


class PreconditionError(CoxScaleError, ValueError):
    """Inputs violate a documented precondition (sizes, grids, counts)."""


class DegenerateDataError(CoxScaleError):
    """The dataset carries no information for the requested fit."""


class NonConvergenceError(CoxScaleError):
    """An iterative solver failed to converge."""


class AccuracyError(CoxScaleError):
    """A numerical approximation did not reach its accuracy target."""


class DegenerateRegionError(CoxScaleError):
    """A credible region is undefined because its covariance is singular."""
