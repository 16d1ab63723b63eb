"""Exception types shared across the package."""


class PhaserecError(Exception):
    """Base class for all package-specific errors."""


class ConfigError(PhaserecError):
    """Inconsistent or invalid configuration (e.g. sample-rate mismatch)."""


class DataError(PhaserecError):
    """Malformed or unreadable input data (files, corpora)."""


class NumericError(PhaserecError):
    """Numerical failure: NaN loss, degenerate window normalization, ..."""


class ConvergenceError(PhaserecError):
    """Iterative solver did not reach its tolerance.

    Carries the last relative residual so callers can inspect how far the
    solve got.
    """

    def __init__(self, message, residual=None):
        super().__init__(message)
        self.residual = residual


class UsageError(PhaserecError):
    """Command-line misuse: missing inputs, bad flag combinations."""
