"""Exception hierarchy shared by the numerical modules and the CLI."""


class PointresError(Exception):
    """Base class for all library errors."""


class DomainError(PointresError, ValueError):
    """An argument lies outside the domain where the quantity is defined."""


class SingularityError(DomainError):
    """A kernel was evaluated exactly at its singular point."""


class EvaluationError(PointresError, ArithmeticError):
    """An integrand produced non-finite values."""

    def __init__(self, message, node=None):
        super().__init__(message)
        self.node = node


class RegimeError(PointresError):
    """The requested computation is outside the hypotheses it relies on."""


class DivergenceError(PointresError):
    """An iteration or integral failed to converge."""

    def __init__(self, message, index=None, value=None):
        super().__init__(message)
        self.index = index
        self.value = value
