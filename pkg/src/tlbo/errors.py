"""Exception types shared across the package."""


class TlboError(Exception):
    """Base class for all package-specific errors."""


class ValidationError(TlboError, ValueError):
    """Raised when inputs violate a documented precondition or invariant."""


class FitError(TlboError, RuntimeError):
    """Raised when a surrogate cannot be fitted (factorization failure)."""


class SolverError(TlboError, RuntimeError):
    """Raised when the simplex solver encounters non-finite values.

    Carries the last feasible iterate so callers can inspect it.
    """

    def __init__(self, message, last_iterate=None):
        super().__init__(message)
        self.last_iterate = last_iterate


class ParseError(TlboError, ValueError):
    """Raised when an input file does not match the expected schema."""
