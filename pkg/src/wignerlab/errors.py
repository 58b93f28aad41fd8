"""Exception and warning types shared across the package."""


class WignerLabError(Exception):
    """Base class for all package errors."""


class ConfigError(WignerLabError, ValueError):
    """Malformed or inconsistent configuration."""


class NumericalError(WignerLabError, ArithmeticError):
    """Base class for numerical failures."""


class MomentInfeasible(NumericalError):
    pass


class DomainError(NumericalError, ValueError):
    pass


class BranchError(NumericalError, ValueError):
    """Spectral parameter lies on the branch cut [-2, 2]."""


class DegenerateArguments(NumericalError, ValueError):
    pass


class TailTooLarge(NumericalError):
    pass


class AssumptionViolated(WignerLabError, ValueError):
    """Ensemble does not satisfy the moment-matching hypothesis of a formula."""


class PoleProximity(NumericalError):
    pass


class SingularShift(NumericalError):
    pass


class EigenFailure(NumericalError):
    pass


class EmptyBatch(NumericalError, ValueError):
    pass


class NonPositiveStatistic(NumericalError, ValueError):
    pass


class BudgetExceeded(NumericalError):
    pass


class TruncationWarning(UserWarning):
    pass


class QuadratureWarning(UserWarning):
    pass
