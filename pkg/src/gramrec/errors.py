"""Exception types shared across the package."""


class GramrecError(Exception):
    """Base class for errors raised by gramrec."""


class DataError(GramrecError):
    """Malformed input data, inconsistent schemas, or impossible splits."""


class NumericalError(GramrecError):
    """Numerical failure, e.g. a factorization that cannot be computed."""
