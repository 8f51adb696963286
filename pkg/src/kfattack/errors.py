"""Exception hierarchy shared across the package."""


class KfAttackError(Exception):
    """Base class for all package errors."""


class DimensionError(KfAttackError, ValueError):
    """Matrix or vector shapes do not agree."""


class ValidationError(KfAttackError, ValueError):
    """An input violates a documented invariant (PSD, range, budget...)."""


class NumericalError(KfAttackError, ArithmeticError):
    """A numerical routine failed (singular matrix, non-convergence)."""


class ConvergenceError(NumericalError):
    """An iteration did not converge within its budget.

    Attributes
    ----------
    iterations : int
        Number of iterations performed.
    residual : float
        Last convergence residual.
    """

    def __init__(self, message, iterations, residual):
        super().__init__(f"{message} (iterations={iterations}, residual={residual:.3e})")
        self.iterations = iterations
        self.residual = residual
