"""Exception types shared across the package."""


class TeamCFRError(Exception):
    """Base class for all package errors."""


class ConfigError(TeamCFRError, ValueError):
    """Invalid game spec, solver config or experiment file."""


class ContractViolation(TeamCFRError, RuntimeError):
    """A precondition of an operation was not met (e.g. illegal action)."""


class SizeCapExceeded(TeamCFRError):
    """An exact routine was asked to enumerate a game above its size cap."""

    def __init__(self, message: str, estimate: float | None = None):
        super().__init__(message)
        self.estimate = estimate


class TrainingDiverged(TeamCFRError, FloatingPointError):
    """Network training produced a non-finite loss."""


class BudgetExceeded(TeamCFRError):
    """A wall-clock budget ran out."""
