"""Exception types shared across the package."""


class ConfigError(ValueError):
    """Invalid run configuration (bad value, unknown key, malformed file)."""

    def __init__(self, message, line=None):
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)
        self.line = line


class CheckpointError(ValueError):
    """Checkpoint file is corrupt, truncated or of an unsupported version."""


class NumericalError(RuntimeError):
    """A computation produced non-finite values."""
