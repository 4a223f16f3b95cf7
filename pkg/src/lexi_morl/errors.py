"""Exception types shared across the package."""


class ContractViolation(RuntimeError):
    """A caller broke an operation's precondition (e.g. stepping a finished episode)."""


class ConfigError(ValueError):
    """Malformed configuration or map data."""


class CheckpointError(ValueError):
    """Checkpoint file is unreadable, corrupt, or of an unknown version."""


class TrainingError(RuntimeError):
    """Training produced non-finite values."""

    def __init__(self, message, diagnostics=None):
        super().__init__(message)
        self.diagnostics = dict(diagnostics or {})
