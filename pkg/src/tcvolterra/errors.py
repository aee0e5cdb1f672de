"""Exception types shared across the toolkit."""


class InvalidArgumentError(ValueError):
    """Raised when an input violates an operation's preconditions."""


class NumericalBlowupError(ArithmeticError):
    """A simulated state left the finite range.

    ``index`` is ``(path, time_index)`` of the first offending value.
    """

    def __init__(self, message, index=None):
        super().__init__(message)
        self.index = index


class UnsupportedModelError(TypeError):
    """The model lacks a kernel (derivative, NA-derivative field, ...) the operation needs."""


class SingularRegressionError(ArithmeticError):
    """The regression normal system could not be solved even with ridge damping."""

    def __init__(self, message, condition_number=None, cell=None):
        super().__init__(message)
        self.condition_number = condition_number
        self.cell = cell
