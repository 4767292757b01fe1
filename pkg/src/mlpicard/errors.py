"""Exception types shared across the package."""


class SolverError(Exception):
    """Base class for all errors raised by this package."""


class NonFiniteCoefficient(SolverError):
    """A user-supplied coefficient function returned NaN or Inf."""


class SingularDiffusion(SolverError):
    """Diffusion matrix is numerically singular at a visited point."""


class DegenerateInterval(SolverError):
    """A time interval collapsed or is inverted (requires t < s)."""


class DomainError(SolverError):
    """Argument outside the mathematical domain of the operation."""


class NotExactlySimulable(SolverError):
    """Problem does not declare constant coefficients for exact path sampling."""


class BudgetExceeded(SolverError):
    """A configured work budget was exhausted."""


class RecursionBudgetExceeded(BudgetExceeded):
    """Estimator hit its hard cap on counted operations."""


class MissingReference(SolverError):
    """No exact solution or reference estimate is available."""


class UnsupportedTerminal(SolverError):
    """Problem structure is outside the closed-form family."""


class ConfigError(SolverError):
    """Run configuration failed to parse or validate."""
