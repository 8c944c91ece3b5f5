"""Exception types shared across the package."""


class FreqfuseError(Exception):
    """Base class for every error raised by this package."""


class ShapeError(FreqfuseError, ValueError):
    """A tensor shape or dtype violates an operation contract."""


class NonFiniteError(FreqfuseError, ValueError):
    """A value that must stay finite contains NaN or Inf."""


class GraphError(FreqfuseError, RuntimeError):
    """Misuse of a recorded operation graph (bad loss node, double replay, mutation)."""


class ConfigError(FreqfuseError, ValueError):
    """An invalid configuration value, file, or key."""


class FdtError(FreqfuseError, ValueError):
    """A malformed FDT tensor file."""


class TrainingDivergedError(FreqfuseError, RuntimeError):
    """The training loss became non-finite; carries the step index."""

    def __init__(self, step: int, message: str = ""):
        self.step = step
        super().__init__(message or f"training diverged at step {step}")
