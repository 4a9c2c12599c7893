"""Exception types shared across the package."""


class StructuralError(ValueError):
    """A tableau or coefficient set violates a structural requirement."""


class PoleError(ValueError):
    """A stability function was evaluated exactly at one of its poles."""


class SingularMatrixError(ArithmeticError):
    """A stage matrix factorization hit an exactly zero pivot.

    Attributes
    ----------
    pivot_index : int
        Zero-based index of the vanishing pivot in the factored matrix.
    """

    def __init__(self, message: str, pivot_index: int):
        super().__init__(message)
        self.pivot_index = pivot_index


class EvaluationError(RuntimeError):
    """A model evaluation produced non-finite values.

    ``column_index`` identifies the offending column when the failure
    happened while building a finite-difference Jacobian, else None.
    """

    def __init__(self, message: str, column_index: int | None = None):
        super().__init__(message)
        self.column_index = column_index


class StepFailure(RuntimeError):
    """A single step could not be completed; retrying with smaller h may help."""


class IntegrationFailure(RuntimeError):
    """Integration stopped before reaching t_end.

    Carries the last accepted time and state so callers can report or
    restart from the point of failure.
    """

    def __init__(self, message: str, t_reached: float, state):
        super().__init__(message)
        self.t_reached = t_reached
        self.state = state
