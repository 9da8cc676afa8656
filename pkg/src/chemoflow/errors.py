"""Exception hierarchy shared by every module."""


class ChemoflowError(Exception):
    """Base class for all errors raised by chemoflow."""


class InvalidParameterError(ChemoflowError, ValueError):
    pass


class DomainError(ChemoflowError, ValueError):
    pass


class ToleranceError(ChemoflowError, ArithmeticError):
    pass


class EvaluationError(ChemoflowError, ValueError):
    """A model function or expression produced an unusable value."""

    def __init__(self, message, *, expression=None, position=None):
        super().__init__(message)
        self.expression = expression
        self.position = position


class PositivityError(ChemoflowError, ValueError):
    pass


class IterationError(ChemoflowError, RuntimeError):
    """A linear solver failed to reach its tolerance."""

    def __init__(self, message, *, residual=None, iterations=None):
        super().__init__(message)
        self.residual = residual
        self.iterations = iterations


class CompatibilityError(ChemoflowError, ValueError):
    pass


class StabilityError(ChemoflowError, RuntimeError):
    """A time step violated a stability limit or a discrete invariant."""

    def __init__(self, message, *, invariant=None, time=None):
        super().__init__(message)
        self.invariant = invariant
        self.time = time


class InfeasibleError(ChemoflowError, ValueError):
    pass


class InvalidInitialDataError(ChemoflowError, ValueError):
    pass


class ConfigParseError(ChemoflowError, ValueError):
    def __init__(self, message, *, line=None):
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)
        self.line = line


class ConfigValidationError(ChemoflowError, ValueError):
    def __init__(self, message, *, key=None):
        if key is not None:
            message = f"{key}: {message}"
        super().__init__(message)
        self.key = key


class SweepRunError(ChemoflowError, RuntimeError):
    """One run of an epsilon sweep failed."""

    def __init__(self, message, *, eps=None):
        super().__init__(message)
        self.eps = eps
