"""Shared exception types."""


class NumericalError(RuntimeError):
    """A computation produced non-finite values."""
