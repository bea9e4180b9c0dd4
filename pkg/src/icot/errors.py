"""Exception types shared across the package."""


class InputError(ValueError):
    """Arguments violate an operation's preconditions."""


class ConvergenceError(RuntimeError):
    """An iterative solver stopped before meeting its tolerance."""

    def __init__(self, message: str, residual: float = float("nan"), trace=None):
        super().__init__(message)
        self.residual = residual
        self.trace = trace


class NumericRangeError(ArithmeticError):
    """A computation left the representable floating-point range."""


class CertificationError(AssertionError):
    """A numerical certificate that should hold did not."""
