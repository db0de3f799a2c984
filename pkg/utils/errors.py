"""
Domain Exceptions for TrajGuard

Every failure a caller can act on is raised as a subclass of
TrajGuardError so that the CLI layer can map it to an exit code.

Author: TrajGuard Development Team
"""


class TrajGuardError(Exception):
    """Base class for all domain errors."""
    pass


class StructuralError(TrajGuardError):
    """Raised when tensor shapes or layer counts do not line up."""
    pass


class NumericError(TrajGuardError):
    """Raised when a computation produces or receives non-finite values."""
    pass


class DataError(TrajGuardError):
    """Raised when input data is empty, single-class or inconsistent."""
    pass


class PreconditionError(TrajGuardError):
    """Raised when an operation is called with arguments it does not accept."""
    pass


class ConfigError(TrajGuardError):
    """Raised when a run configuration is malformed."""
    pass


class DependencyError(TrajGuardError):
    """Raised when a pipeline stage needs an artifact that was never produced."""

    def __init__(self, stage, message=None):
        self.stage = stage
        super().__init__(message or f"missing artifact from stage '{stage}'; run it first or include it in the plan")


class ContainerFormatError(TrajGuardError):
    """Raised when a tensor container file cannot be parsed."""
    pass
