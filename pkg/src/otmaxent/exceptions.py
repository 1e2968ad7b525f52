"""Exception types shared across solvers and fitters."""


class OtmaxentError(Exception):
    """Base class for library-specific failures."""


class ConvergenceError(OtmaxentError):
    """A numerical routine produced non-finite values or failed to converge.

    The ``diagnostics`` dict carries iterate-level information (iteration
    number, last objective value, gradient norm) for post-mortem use.
    """

    def __init__(self, message, diagnostics=None):
        super().__init__(message)
        self.diagnostics = diagnostics or {}


class InfeasibilityError(OtmaxentError):
    """The requested constraint set is empty or unreachable.

    ``attained`` records the best constraint value that was achieved before
    giving up (e.g. the smallest transport discrepancy found).
    """

    def __init__(self, message, attained=None):
        super().__init__(message)
        self.attained = attained


class FitError(OtmaxentError):
    """Estimation failed (singular information matrix, too many bad replicates)."""
