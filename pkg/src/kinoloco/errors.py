"""Exception types shared across the package."""


class InvalidInputError(ValueError):
    """An argument violates an operation's precondition."""


class InvalidConfigError(ValueError):
    """A configuration value or key is invalid.

    ``key`` names the offending entry (dotted path) when known.
    """

    def __init__(self, message: str, key: str | None = None):
        super().__init__(message if key is None else f"{key}: {message}")
        self.key = key


class CheckpointError(RuntimeError):
    """A checkpoint could not be read, or does not match the expected layout."""


class EnvironmentFault(RuntimeError):
    """The simulator produced or received non-finite values."""


class TrainingFault(RuntimeError):
    """An optimization step produced non-finite losses or parameters."""

    def __init__(self, message: str, diagnostics: dict | None = None):
        detail = "" if not diagnostics else " (" + ", ".join(f"{k}={v!r}" for k, v in diagnostics.items()) + ")"
        super().__init__(message + detail)
        self.diagnostics = dict(diagnostics or {})
