"""Exception hierarchy shared by the library and the command line.

Each class carries the process exit code the CLI maps it to.
"""


class SharpBoundsError(Exception):
    exit_code = 1


class DomainError(SharpBoundsError, ValueError):
    """Argument outside the domain of an operation."""

    exit_code = 2


class InputError(DomainError):
    """Malformed data file or configuration document."""


class DegenerateDesignError(SharpBoundsError):
    """An estimator is undefined for this assignment (empty arm or stratum)."""

    exit_code = 3


class RegressionError(DegenerateDesignError):
    pass


class WeakInstrumentError(SharpBoundsError):
    exit_code = 4


class AssumptionViolation(SharpBoundsError, ValueError):
    """Monotonicity or exclusion restriction fails on the supplied population."""

    exit_code = 2
