"""Exception types shared across the package."""


class ParameterError(ValueError):
    """Model or configuration parameters violate a constraint."""


class DomainError(ValueError):
    """A quantity was requested outside its mathematical domain."""


class DivergentMomentError(ArithmeticError):
    """The requested moment does not exist for the distribution.

    Raised instead of returning infinity so that divergence is an explicit
    result state callers must handle.
    """


class FitError(RuntimeError):
    """A fit failed to converge or was handed degenerate data."""

    def __init__(self, message, residuals=None):
        super().__init__(message)
        self.residuals = residuals


class InputError(ValueError):
    """An input file or data stream is malformed."""


class ExperimentError(RuntimeError):
    """An experiment produced unreliable results (e.g. too many flagged samples)."""
