class ConeEmbedError(Exception):
    """Base class for library errors."""


class DataError(ConeEmbedError, ValueError):
    """Malformed or inconsistent input data."""


class NumericalError(ConeEmbedError, ArithmeticError):
    """Non-finite values or failed numerical convergence."""
