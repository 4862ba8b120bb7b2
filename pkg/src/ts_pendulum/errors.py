"""Exception hierarchy for ts-pendulum."""

from typing import Any


class PendulumError(Exception):
    """Base class for all ts-pendulum errors."""


class TimeScaleError(PendulumError, ValueError):
    """Raised when a time scale specification is invalid."""


class NonZeroMeanError(PendulumError, ValueError):
    """Raised when a function expected in the zero-mean subspace is not."""

    def __init__(self, mean: float, tolerance: float) -> None:
        super().__init__(f"Expected zero mean, got {mean:.3e} (tolerance {tolerance:.3e})")
        self.mean = mean
        self.tolerance = tolerance


class SpeedLimitError(PendulumError, ValueError):
    """Raised when a slope reaches the speed bound c."""

    def __init__(self, speed: float, c: float) -> None:
        super().__init__(f"Slope {speed:.6g} reaches speed limit c={c:.6g}")
        self.speed = speed
        self.c = c


class NoSignChangeError(PendulumError, ArithmeticError):
    """Raised when a root bracket does not change sign."""


class NotConvergedError(PendulumError, RuntimeError):
    """Raised when an iterative solve fails; carries the best iterate."""

    def __init__(self, message: str, solution: Any = None) -> None:
        super().__init__(message)
        self.solution = solution


class AllDivergedError(PendulumError, RuntimeError):
    """Raised when no row of a solvability sweep converged."""

    def __init__(self, message: str, table: Any = None) -> None:
        super().__init__(message)
        self.table = table


class MethodUnavailableError(PendulumError, ValueError):
    """Raised when a k-constant method does not apply to the grid."""


class PreconditionCKError(PendulumError, ValueError):
    """Raised when c*k is outside the range where the bound applies."""

    def __init__(self, ck: float) -> None:
        super().__init__(f"c*k = {ck:.6g} is not below pi")
        self.ck = ck


class ConfigError(PendulumError, ValueError):
    """Raised when a run configuration cannot be parsed."""

    def __init__(self, message: str, field: str | None = None, line: int | None = None) -> None:
        location = ""
        if field:
            location += f" [field: {field}]"
        if line is not None:
            location += f" [line: {line}]"
        super().__init__(f"{message}{location}")
        self.field = field
        self.line = line
