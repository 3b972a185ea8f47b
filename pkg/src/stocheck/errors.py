"""Exception hierarchy.

Every exception carries an ``exit_code`` used by the command-line front end:
2 for bad input, 3 for domain errors, 4 for numerical failures.
"""


class StocheckError(Exception):
    exit_code = 1


class InputError(StocheckError, ValueError):
    """Malformed system file or argument."""

    exit_code = 2


class DimensionMismatch(StocheckError, ValueError):
    exit_code = 2


class DomainError(StocheckError):
    exit_code = 3


class IndexBeyondSchedule(DomainError, IndexError):
    """Time index outside the range a finite schedule describes."""


class WindowTooLarge(DomainError):
    """Stacked maps requested over a window longer than the stack cap."""


class NoControlChannel(DomainError):
    pass


class NotTimeInvariant(DomainError):
    pass


class NotPeriodic(DomainError):
    pass


class ModeMismatch(DomainError):
    pass


class NumericalFailure(StocheckError):
    exit_code = 4


class NoConvergence(NumericalFailure):
    def __init__(self, T_max, gap=None):
        self.T_max = T_max
        self.gap = gap
        msg = f"no convergence within T_max={T_max}"
        if gap is not None:
            msg += f" (last gap {gap:.3e})"
        super().__init__(msg)


class MonotonicityViolated(NumericalFailure):
    pass


class SingularPeriodMap(NumericalFailure):
    pass
