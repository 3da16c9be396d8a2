"""Exception hierarchy shared by every engine.

Each error family carries the process exit code the command line uses for it.
"""


class OptoCoolError(Exception):
    exit_code = 1


class ConfigError(OptoCoolError):
    exit_code = 2


class RegimeError(OptoCoolError):
    """Parameters lie outside the regime an operation is defined for."""

    exit_code = 3


class UnsupportedRegime(RegimeError):
    pass


class HeatingRegime(RegimeError):
    pass


class UnstableParams(RegimeError):
    pass


class DomainError(RegimeError, ValueError):
    pass


class InvalidK(RegimeError, ValueError):
    pass


class NumericalError(OptoCoolError):
    exit_code = 4


class NoConvergence(NumericalError):
    pass


class StepUnderflow(NumericalError):
    pass


class SingularSystem(NumericalError):
    pass


class StepTooLarge(NumericalError):
    pass


class BudgetExceeded(OptoCoolError):
    exit_code = 5


class TruncationWarning(UserWarning):
    """Fock-space truncation is leaking population into the top levels."""
