class SoftBrierError(Exception):
    pass


class ValidationError(SoftBrierError, ValueError):
    """Bad shapes, invalid labels or configuration, out-of-range arguments."""


class NumericError(SoftBrierError, ArithmeticError):
    """Non-finite intermediate values during a computation."""


class ModelFormatError(ValidationError):
    """Persisted model is truncated, of the wrong type or of another format version."""
