"""Exception hierarchy shared across the package."""


class BeliefFitError(Exception):
    """Base class for all package-specific errors."""


class InvalidInputError(BeliefFitError, ValueError):
    """An argument violated a documented precondition."""


class ConfigurationError(BeliefFitError, ValueError):
    """A configuration is internally inconsistent or infeasible."""


class DegenerateEvidenceError(BeliefFitError, ArithmeticError):
    """All posterior mass was annihilated by the evidence (normalizer ~ 0)."""


class NoActionError(BeliefFitError, RuntimeError):
    """The policy has no admissible action (every hole already fitted)."""


class OptimizationFailureError(BeliefFitError, RuntimeError):
    """Gradient descent diverged instead of reducing the loss."""


class DegenerateOracleError(BeliefFitError, ValueError):
    """A closed-form estimator was given a sample set it cannot handle."""


class DegenerateOracleWarning(UserWarning):
    """A closed-form estimator produced a rank-deficient result."""
