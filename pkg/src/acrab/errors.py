"""Exception hierarchy shared by every module."""


class AcrabError(Exception):
    pass


class ValidationError(AcrabError, ValueError):
    """Input violates a documented invariant (bad shapes, non-stochastic rows, ...)."""


class CoverageError(AcrabError):
    """Target occupancy puts mass where the data distribution has none."""

    def __init__(self, state: int, action: int, message: str | None = None):
        self.state = state
        self.action = action
        super().__init__(message or f"d^pi > 0 but mu = 0 at (s={state}, a={action})")


class DegenerateClassError(AcrabError):
    """Every member of a class makes a ratio or search undefined."""


class NumericalError(AcrabError, RuntimeError):
    """Linear-solve residual exceeded its bound."""
