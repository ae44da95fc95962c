"""Exception types raised by the solver stack."""


class FastCubicError(Exception):
    """Base class for all library errors."""


class SolverBudgetExceeded(FastCubicError):
    """An iterative linear solver ran out of iterations or epochs.

    Usually means the caller's strong-convexity bound ``mu_lower`` was wrong.
    """


class NumericalBreakdown(FastCubicError):
    """A non-finite iterate appeared."""


class EigBudgetExceeded(FastCubicError):
    """The min-eigenvector search could not certify its accuracy in budget."""


class AlgorithmInvariantViolated(FastCubicError):
    """An invariant that the theory guarantees was observed to fail."""


class InconsistentInstance(FastCubicError):
    """The exact cubic solver found a hard case that cannot occur."""


class ConfigError(FastCubicError):
    """Bad experiment configuration."""
