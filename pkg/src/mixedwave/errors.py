"""Exception types shared across the package."""


class InvalidArgument(ValueError):
    """Raised when an input violates a documented precondition."""


class NumericalFailure(ArithmeticError):
    """Raised when a factorization or solve breaks down (e.g. a non-positive pivot)."""
