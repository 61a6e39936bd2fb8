"""Exception types shared across the package."""


class NumericalFailure(RuntimeError):
    """A quadrature or numerical routine did not converge.

    Raised instead of letting NaN/Inf propagate silently; ``diagnostics``
    carries whatever the failing routine knew (refinement traces, warning
    text, partial values).
    """

    def __init__(self, message, diagnostics=None):
        super().__init__(message)
        self.diagnostics = dict(diagnostics or {})


class SupportOverflowError(RuntimeError):
    """Too many Monte Carlo paths pushed probability mass into the grid boundary."""

    def __init__(self, message, fraction=None):
        super().__init__(message)
        self.fraction = fraction


class ConfigError(ValueError):
    """Invalid run configuration. Collects every problem found, not just the first."""

    def __init__(self, errors):
        self.errors = [str(e) for e in errors]
        super().__init__("; ".join(self.errors))
