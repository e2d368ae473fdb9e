"""Exception hierarchy shared by every module of the package."""


class ArPersistenceError(Exception):
    """Base class for all errors raised by ar_persistence."""

    exit_code = 1


class PreconditionError(ArPersistenceError, ValueError):
    """An input violates the documented precondition of an operation."""

    exit_code = 2


class NumericalError(ArPersistenceError, ArithmeticError):
    """A numeric procedure failed (non-convergence, ill-conditioning, residue).

    Args:
        message: Human readable description.
        residual: Last residual of an iteration, when one applies.
        condition: Condition estimate of a linear system, when one applies.
    """

    exit_code = 3

    def __init__(self, message: str, residual: float | None = None, condition: float | None = None):
        super().__init__(message)
        self.residual = residual
        self.condition = condition
