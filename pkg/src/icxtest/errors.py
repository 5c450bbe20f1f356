"""Exception types shared across the package."""


class IcxError(Exception):
    """Base class for every error raised by this package."""


class MarginError(IcxError, ValueError):
    """Row and column totals are inconsistent or infeasible."""


class FeasibilityError(IcxError, ValueError):
    """A table, first row, or starting point violates its constraints."""


class WeightError(IcxError, ValueError):
    """Order weights are not strictly decreasing positive reals."""


class NoAlternativeError(IcxError, ValueError):
    """No probability pair satisfies the order restriction for the given log odds ratios."""


class AlternativeError(IcxError, ValueError):
    """An alternative specification is invalid, for example a zero cell."""


class ConvergenceError(IcxError, RuntimeError):
    """An iterative solver failed to converge.

    ``best`` carries the best iterate found, when one exists.
    """

    def __init__(self, message, best=None):
        super().__init__(message)
        self.best = best
