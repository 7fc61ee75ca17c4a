"""Exception types raised by layerlab."""

from __future__ import annotations


class ValidationError(ValueError):
    """Invalid domain, grid, parameter or configuration input."""


class ConvergenceError(RuntimeError):
    """An iterative method hit its iteration cap.

    ``history`` holds the residual (or increment) sequence so callers can
    see how far the iteration got.
    """

    def __init__(self, message: str, history=None):
        super().__init__(message)
        self.history = list(history or [])

    @property
    def last_residual(self):
        return self.history[-1] if self.history else float("nan")


class LinearAlgebraError(RuntimeError):
    """A linearized system was singular or produced non-finite values."""


class ConstantsError(ValueError):
    """Barrier constants could not be made positive (e.g. eps0 too large)."""


class SchemeError(RuntimeError):
    """Monotone iteration lost monotonicity beyond tolerance."""


class ContinuationError(RuntimeError):
    """Continuation stalled; ``last_good`` keeps the last accepted state.

    ``partial`` holds the curve points recorded before the failure, if any.
    """

    def __init__(self, message: str, last_good=None, partial=None):
        super().__init__(message)
        self.last_good = last_good
        self.partial = partial
