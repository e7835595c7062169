"""Exception types shared by all modules."""


class MagweylError(Exception):
    """Base class for library errors."""


class InputError(MagweylError, ValueError):
    """Raised on malformed or out-of-range arguments."""


class NumericError(MagweylError, ArithmeticError):
    """Raised when a numerical procedure fails to reach its tolerance."""


class ToleranceWarning(UserWarning):
    """Issued when a computation exceeds its error budget but still returns."""
