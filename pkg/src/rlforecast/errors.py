"""Exception types shared across the package."""


class ConfigurationError(ValueError):
    """Invalid shapes, sizes or settings detected before any computation runs."""


class UsageError(RuntimeError):
    """An API was called out of order (e.g. backward before forward)."""


class NumericError(FloatingPointError):
    """A forward pass or loss produced NaN/Inf."""


class DataError(ValueError):
    """Malformed input data (CSV rows, dates, values)."""
