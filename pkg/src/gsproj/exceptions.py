"""Exception types raised across the package."""


class DomainError(ValueError):
    """Input outside the domain of an operation (zero vector, bad length, NaN...)."""


class ConfigurationError(ValueError):
    """Inconsistent or missing configuration (e.g. WSNMF without weights)."""


class ConvergenceError(RuntimeError):
    """Root finding did not reach the requested accuracy within max_iters.

    The last bracket ``(mu_lo, mu_hi)`` is kept on the exception so callers can
    decide whether it is good enough.
    """

    def __init__(self, message, bracket=None, iterations=None):
        super().__init__(message)
        self.bracket = bracket
        self.iterations = iterations


class ParseError(ValueError):
    """Malformed matrix file. ``line`` is 1-based."""

    def __init__(self, message, line=None):
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)
        self.line = line
