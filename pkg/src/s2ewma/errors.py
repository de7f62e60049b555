"""Exception types shared across the package."""


class ChartError(Exception):
    """Base class for numerical/design failures."""


class DivergenceError(ChartError):
    """A run-length tail ratio reached 1 at working precision, so an
    expectation (ARL) cannot be summed."""


class SaturationError(ChartError):
    """A CDF never reached the requested level within the search cap."""


class InfeasibleTargetError(ChartError):
    """No control limit inside the admissible range satisfies the target."""


class SolverError(ChartError):
    """Root finding failed for a reason other than infeasibility
    (e.g. a grossly non-monotone residual)."""
