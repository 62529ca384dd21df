"""Exception types shared across the package."""


class ConfigError(ValueError):
    """Invalid system configuration or config file contents."""

    def __init__(self, message, line=None):
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)
        self.line = line


class NumericalError(RuntimeError):
    """A numerical operation failed (singular / non-HPD matrix, divergence)."""

    def __init__(self, message, pivot=None):
        if pivot is not None:
            message = f"{message} (pivot {pivot})"
        super().__init__(message)
        self.pivot = pivot
