"""Exception types raised by the laboratory."""
from typing import Optional


class ConfigError(ValueError):
    """Invalid experiment configuration; carries the dotted key path."""

    def __init__(self, key: str, message: str):
        self.key = key
        super().__init__(f"{key}: {message}")


class GridMismatchError(ValueError):
    """Two fields or a field and a grid do not share the same radial grid."""


class ShellConditionError(ValueError):
    """The coupling profile does not vanish on the resonant shell."""

    def __init__(self, message: str, min_abs_on_shell: float):
        self.min_abs_on_shell = min_abs_on_shell
        super().__init__(f"{message} (min_abs_on_shell={min_abs_on_shell:.3e})")


class CoverageError(ValueError):
    """A diagnostic needs stored fields that the trajectory does not have."""


class IntegrationError(RuntimeError):
    """Time integration produced a non-finite or runaway state."""

    def __init__(self, message: str, step: int, last_good_time: Optional[float]):
        self.reason = message
        self.step = step
        self.last_good_time = last_good_time
        super().__init__(f"{message} at step {step} (last good checkpoint t={last_good_time})")


class RunError(RuntimeError):
    """An experiment phase failed; wraps the underlying module error."""

    def __init__(self, kind: str, phase: str, cause: Exception):
        self.kind = kind
        self.phase = phase
        self.cause = cause
        super().__init__(f"{kind} experiment failed during {phase}: {cause}")
