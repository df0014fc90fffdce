class WaveCoreError(Exception):
    """Root of all simulator errors."""


class GridError(WaveCoreError, ValueError):
    pass


class FieldConfigError(WaveCoreError, ValueError):
    pass


class EigenSolverError(WaveCoreError, RuntimeError):
    pass


class StepConvergenceError(WaveCoreError, RuntimeError):
    """Carries the number of dt halvings spent before giving up."""

    def __init__(self, message: str, halvings: int = 0):
        super().__init__(message)
        self.halvings = halvings


class InsufficientSamplesError(WaveCoreError, ValueError):
    pass


class BasisTruncationError(WaveCoreError, ValueError):
    pass


class ConfigError(WaveCoreError, ValueError):
    pass


class OutputError(WaveCoreError, OSError):
    pass
