"""Relativistic operator and the forced pendulum residual on a time scale.

The pendulum operator is

    P x = (phi(x^D))^D + a x^D + b sin x,    phi(v) = v / sqrt(1 - v^2 / c^2),

and a T-periodic solution satisfies ``P x = p0 + s`` at every node.
"""

import logging
import math
from collections.abc import Iterable
from dataclasses import dataclass
from enum import Enum

import numpy as np
import pandas as pd

from ts_pendulum.errors import SpeedLimitError
from ts_pendulum.services.timescale import (
    GridFunction,
    TimeScaleGrid,
    delta_derivative,
    delta_integral,
    mean,
    project_zero_mean,
)

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class PendulumParams:
    """Constants of the pendulum equation."""

    a: float  # friction
    b: float  # pendulum amplitude
    c: float  # speed bound
    T: float  # period

    def __post_init__(self) -> None:
        if not self.a >= 0:
            raise ValueError(f"friction a must be nonnegative, got {self.a}")
        for name in ("b", "c", "T"):
            value = getattr(self, name)
            if not value > 0:
                raise ValueError(f"{name} must be positive, got {value}")

    @classmethod
    def from_dict(cls, data: dict, period: float | None = None) -> "PendulumParams":
        """Create from dictionary; ``T`` defaults to the time scale period."""
        T = data.get("T", period)
        if T is None:
            raise ValueError("params.T is required when no time scale period is given")
        return cls(a=float(data["a"]), b=float(data["b"]), c=float(data["c"]), T=float(T))

    def to_dict(self) -> dict:
        """Convert to dictionary."""
        return {"a": self.a, "b": self.b, "c": self.c, "T": self.T}


@dataclass(frozen=True, eq=False)
class Forcing:
    """Zero-mean forcing p0 plus the constant offset s."""

    p0: GridFunction
    s: float = 0.0
    removed_mean: float = 0.0  # mean subtracted from the raw samples

    @classmethod
    def from_values(cls, p0: GridFunction, s: float = 0.0) -> "Forcing":
        """Project raw samples onto the zero-mean subspace of the actual grid."""
        raw_mean = mean(p0)
        projected = project_zero_mean(p0.with_values(p0.values, lift=0.0))
        if abs(raw_mean) > 0:
            logger.debug("Forcing: removed mean %.3e from p0", raw_mean)
        return cls(p0=projected, s=float(s), removed_mean=raw_mean)

    @classmethod
    def from_series(
        cls,
        grid: TimeScaleGrid,
        terms: Iterable[tuple[float, float, float]],
        s: float = 0.0,
    ) -> "Forcing":
        """Evaluate ``sum_k A_k cos(2 pi k t/T) + B_k sin(2 pi k t/T)`` on the grid.

        Args:
            grid: Grid to sample on.
            terms: ``(k, A_k, B_k)`` triples.
            s: Constant offset.
        """
        omega = 2.0 * math.pi / grid.period
        values = np.zeros(grid.size)
        for k, cos_coef, sin_coef in terms:
            phase = omega * float(k) * grid.nodes
            values += float(cos_coef) * np.cos(phase) + float(sin_coef) * np.sin(phase)
        return cls.from_values(GridFunction(grid, values), s)

    @classmethod
    def zero(cls, grid: TimeScaleGrid, s: float = 0.0) -> "Forcing":
        """Unforced problem with offset s."""
        return cls(p0=GridFunction.constant(grid, 0.0), s=float(s))

    def with_offset(self, s: float) -> "Forcing":
        """Same p0 with a different offset."""
        return Forcing(p0=self.p0, s=float(s), removed_mean=self.removed_mean)


@dataclass(frozen=True, eq=False)
class PeriodicSolution:
    """A grid function certified as a periodic solution by its residual."""

    x: GridFunction
    xdelta: GridFunction
    s_of_x: float
    residual_norm: float
    residual: GridFunction | None = None
    iterations: int = 0
    strategy: str = ""

    def to_frame(self) -> pd.DataFrame:
        """Solution table ``t,x,xdelta,residual``."""
        nodes = self.x.grid.nodes
        residual = np.full(nodes.size, np.nan) if self.residual is None else self.residual.values
        return pd.DataFrame(
            {"t": nodes, "x": self.x.values, "xdelta": self.xdelta.values, "residual": residual}
        )


class BoundRole(Enum):
    """Direction of the differential inequality being checked."""

    LOWER = "lower"
    UPPER = "upper"


@dataclass(frozen=True)
class InequalityReport:
    """Outcome of a lower/upper solution check."""

    role: BoundRole
    is_valid: bool
    is_strict: bool
    margin: float


def phi(v: float | np.ndarray, c: float) -> float | np.ndarray:
    """Relativistic operator ``v / sqrt(1 - v^2/c^2)``.

    Raises:
        SpeedLimitError: If any ``|v| >= c``.
    """
    arr = np.asarray(v, dtype=float)
    speed = float(np.max(np.abs(arr))) if arr.size else 0.0
    if speed >= c:
        raise SpeedLimitError(speed, c)
    result = arr / np.sqrt(1.0 - (arr / c) ** 2)
    return float(result) if result.ndim == 0 else result


def phi_inv(y: float | np.ndarray, c: float) -> float | np.ndarray:
    """Inverse of phi, ``y / sqrt(1 + y^2/c^2)``, defined on all of R."""
    arr = np.asarray(y, dtype=float)
    result = arr / np.sqrt(1.0 + (arr / c) ** 2)
    return float(result) if result.ndim == 0 else result


def equilibrium_branches(s: float, b: float) -> tuple[float, float]:
    """Constant solutions of the unforced equation: arcsin(s/b) and pi - arcsin(s/b).

    Raises:
        ValueError: If |s| > b.
    """
    if abs(s) > b:
        raise ValueError(f"no equilibrium: |s|={abs(s)} exceeds b={b}")
    principal = math.asin(s / b)
    return principal, math.pi - principal


def checked_slopes(x: GridFunction, c: float) -> GridFunction:
    """Delta derivative of x, checked against the speed bound."""
    xdelta = delta_derivative(x)
    speed = xdelta.sup_norm()
    if speed >= c:
        raise SpeedLimitError(speed, c)
    return xdelta


def pendulum_residual(
    x: GridFunction, params: PendulumParams, forcing: Forcing
) -> GridFunction:
    """Nodewise residual ``P x - p0 - s``.

    Raises:
        SpeedLimitError: If any discrete slope reaches c.
    """
    xdelta = checked_slopes(x, params.c)
    flux = xdelta.with_values(phi(xdelta.values, params.c), lift=0.0)
    r = (
        delta_derivative(flux).values
        + params.a * xdelta.values
        + params.b * np.sin(x.values)
        - forcing.p0.values
        - forcing.s
    )
    return GridFunction(x.grid, r)


def s_functional(x: GridFunction, b: float) -> float:
    """Mean value ``(b/T) * integral of sin(x)``; always within [-b, b]."""
    sin_x = x.with_values(np.sin(x.values), lift=0.0)
    value = b * delta_integral(sin_x) / x.grid.period
    return float(np.clip(value, -b, b))


def check_lower_upper(
    candidate: GridFunction,
    which: BoundRole | str,
    params: PendulumParams,
    forcing: Forcing,
) -> InequalityReport:
    """Check the lower (``(phi(x^D))^D >= f``) or upper (``<=``) inequality.

    The margin is the smallest signed slack over all nodes.
    """
    role = BoundRole(which)
    slack = pendulum_residual(candidate, params, forcing).values
    if role is BoundRole.UPPER:
        slack = -slack
    margin = float(slack.min())
    report = InequalityReport(role=role, is_valid=margin >= 0, is_strict=margin > 0, margin=margin)
    logger.debug("check_lower_upper: role=%s margin=%.3e", role.value, margin)
    return report


def manufacture_forcing(x: GridFunction, params: PendulumParams) -> Forcing:
    """Forcing for which x is an exact discrete solution.

    The pointwise value of ``P x`` is split into its mean (the offset s)
    and the zero-mean remainder (p0).
    """
    zero = Forcing.zero(x.grid)
    p = pendulum_residual(x, params, zero)
    return Forcing.from_values(p, s=mean(p))


@dataclass(frozen=True)
class SmallForcingGuarantee:
    """Inclusion [-eps, eps] in I(p0) certified by constant lower/upper solutions."""

    epsilon: float
    lower: InequalityReport | None
    upper: InequalityReport | None

    @property
    def certified(self) -> bool:
        """Whether both constant functions passed as strict bounds."""
        return bool(self.lower and self.upper and self.lower.is_strict and self.upper.is_strict)


def small_forcing_guarantee(params: PendulumParams, forcing: Forcing) -> SmallForcingGuarantee:
    """Certify ``[-eps, eps]`` with eps = b - ||p0|| using alpha = pi/2, beta = 3 pi/2.

    Both constants are checked at the extreme offsets ``s = +-eps`` shrunk by
    a relative 1e-9 so the inequalities stay strict.
    """
    epsilon = params.b - forcing.p0.sup_norm()
    if epsilon <= 0:
        return SmallForcingGuarantee(epsilon=epsilon, lower=None, upper=None)

    grid = forcing.p0.grid
    alpha = GridFunction.constant(grid, math.pi / 2)
    beta = GridFunction.constant(grid, 3 * math.pi / 2)
    edge = epsilon * (1 - 1e-9)

    lower_reports = [
        check_lower_upper(alpha, BoundRole.LOWER, params, forcing.with_offset(s))
        for s in (-edge, edge)
    ]
    upper_reports = [
        check_lower_upper(beta, BoundRole.UPPER, params, forcing.with_offset(s))
        for s in (-edge, edge)
    ]
    lower = min(lower_reports, key=lambda r: r.margin)
    upper = min(upper_reports, key=lambda r: r.margin)
    return SmallForcingGuarantee(epsilon=epsilon, lower=lower, upper=upper)
