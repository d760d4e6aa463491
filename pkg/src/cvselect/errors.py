"""Exception hierarchy for cvselect."""


class CVSelectError(Exception):
    """Base class for all errors raised by this package."""


class DimensionError(CVSelectError, ValueError):
    pass


class SingularGramError(CVSelectError, ArithmeticError):
    """A Gram matrix X'X is numerically rank deficient."""


class DomainError(CVSelectError, ValueError):
    pass


class ZeroResidualError(CVSelectError, ArithmeticError):
    """A residual sum of squares is zero where its logarithm is required."""


class InsufficientDegreesError(CVSelectError, ValueError):
    """Training sample too small to leave a residual degree of freedom."""


class SchemeError(CVSelectError, ValueError):
    pass


class DivisibilityError(SchemeError):
    pass


class BalanceInfeasibleError(SchemeError):
    pass


class ModelSpaceError(CVSelectError, ValueError):
    pass


class AllModelsFailedError(CVSelectError, RuntimeError):
    pass


class DataError(CVSelectError, ValueError):
    """Malformed input data (parse failure, missing column, missing value)."""


class ConfigError(CVSelectError, ValueError):
    """Invalid configuration; ``path`` names the offending field when known."""

    def __init__(self, message, path=None):
        super().__init__(message)
        self.path = path


class ExperimentFailedError(CVSelectError, RuntimeError):
    pass
