class PermLLError(Exception):
    """Base class for all errors raised by this package."""


class DomainError(PermLLError):
    """An input violates a documented precondition (bad index, non-finite value, invalid simplex)."""


class ConfigError(PermLLError):
    """A configuration value is out of range or structurally invalid."""


class OracleError(PermLLError):
    """A test oracle (e.g. finite differences) hit a non-finite evaluation."""


class TrainingError(PermLLError):
    """Training aborted (e.g. divergence). Carries whatever report was accumulated."""

    def __init__(self, message, partial_report=None):
        super().__init__(message)
        self.partial_report = partial_report
