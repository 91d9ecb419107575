"""Exception and warning types shared across modules."""


class NumericalError(ArithmeticError):
    """A fit or computation failed for numerical reasons."""


class SingularMatrixError(NumericalError):
    """An information or Hessian matrix is not invertible."""


class SeparationError(NumericalError):
    """Coefficients diverge (monotone likelihood / perfect separation)."""


class ConvergenceWarning(UserWarning):
    """An iterative fit stopped at its iteration limit."""
