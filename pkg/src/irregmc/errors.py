"""Exception types shared across the package."""


class InvalidArgumentError(ValueError):
    """A precondition on an operation argument was violated."""


class NumericFailureError(ArithmeticError):
    """A numeric procedure produced non-finite values or failed to converge."""


class UnsupportedOperationError(RuntimeError):
    """The operation is not defined for this input (e.g. no closed form)."""


class DegenerateCurveError(RuntimeError):
    """An error curve has no usable points (all zero or below noise floor)."""


class InsufficientDataError(RuntimeError):
    """All sampled data was degenerate; nothing to estimate."""


class NonconvergenceError(RuntimeError):
    """An adaptive driver hit its hard cap before its stopping test passed.

    Carries a ``diagnostics`` dict with the state at the point of failure.
    """

    def __init__(self, message, diagnostics=None):
        super().__init__(message)
        self.diagnostics = diagnostics or {}


class FitFailureError(RuntimeError):
    """An envelope or regression fit found no admissible solution.

    Carries a ``diagnostics`` dict describing the failed search.
    """

    def __init__(self, message, diagnostics=None):
        super().__init__(message)
        self.diagnostics = diagnostics or {}


class ConfigError(ValueError):
    """An experiment configuration failed to parse or validate."""
