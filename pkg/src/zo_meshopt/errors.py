"""Error types shared across the package.

ConfigError covers anything a user got wrong before work starts (bad config
values, impossible mesh requests, malformed estimator settings).  SolverError
covers failures of the linear solve itself (non-finite output, residual above
tolerance); callers that own output files are expected to flush partial
results before re-raising.
"""


class ConfigError(ValueError):
    """Invalid configuration detected before any real work."""


class SolverError(RuntimeError):
    """The forward solve failed or returned an unusable field."""

    def __init__(self, message: str, residual: float | None = None):
        super().__init__(message)
        self.residual = residual
