"""Sufficient conditions for 0 in I(p0) and the critical period T*.

With k the optimal constant of ``||x - mean(x)|| <= k ||x^D||``, the offset
s = 0 is attainable whenever c k <= pi/2, or when

    psi(delta) = 2 delta cos(delta) + (cT - 2 delta) cos(ck)

is nonnegative for some delta in (0, pi/2). psi is concave there, so its
maximum sits at the root delta* of ``cos(d) - d sin(d) = cos(ck)``.
"""

import logging
import math
from dataclasses import dataclass
from enum import Enum

import numpy as np
import pandas as pd
from scipy.optimize import brentq, linprog

from ts_pendulum.errors import MethodUnavailableError, PreconditionCKError
from ts_pendulum.services.relativistic import PendulumParams
from ts_pendulum.services.timescale import TimeScaleGrid

logger = logging.getLogger(__name__)

HALF_PI = 0.5 * math.pi


class KMethod(Enum):
    """How the constant k of the time scale is obtained."""

    UNIVERSAL = "universal"  # T/2, any time scale
    SOBOLEV_CONTINUOUS = "sobolev_continuous"  # T/(2 sqrt 3), continuous scales
    EXACT_DISCRETE = "exact_discrete"  # linear program on the actual grid


# k / T for the rules that depend on T alone
K_RATIO = {
    KMethod.UNIVERSAL: 0.5,
    KMethod.SOBOLEV_CONTINUOUS: 1.0 / (2.0 * math.sqrt(3.0)),
}


@dataclass(frozen=True)
class KConstant:
    """Constant k of the inequality ``||x - mean(x)||_inf <= k ||x^D||_inf``."""

    value: float
    method: KMethod

    def __post_init__(self) -> None:
        object.__setattr__(self, "method", KMethod(self.method))
        if not self.value > 0:
            raise ValueError(f"k must be positive, got {self.value}")

    def to_dict(self) -> dict:
        """Convert to dictionary."""
        return {"value": self.value, "method": self.method.value}


@dataclass(frozen=True)
class BoundReport:
    """Outcome of the sufficient condition for 0 in I(p0)."""

    ck: float
    cT: float
    delta_star: float | None
    psi_max: float | None
    condition_holds: bool
    strict: bool
    A: float | None  # ck - pi/2 when ck > pi/2
    applicable: bool = True
    criterion: str = "psi"  # simple, psi or inapplicable

    def to_dict(self) -> dict:
        """Convert to dictionary."""
        return {
            "ck": self.ck,
            "cT": self.cT,
            "delta_star": self.delta_star,
            "psi_max": self.psi_max,
            "condition_holds": self.condition_holds,
            "strict": self.strict,
            "A": self.A,
            "applicable": self.applicable,
            "criterion": self.criterion,
        }


def _check_ck(ck: float) -> None:
    if ck >= math.pi:
        raise PreconditionCKError(ck)
    if not ck > 0:
        raise ValueError(f"c*k must be positive, got {ck}")


def k_constant(grid: TimeScaleGrid, method: KMethod | str) -> KConstant:
    """The constant k of the grid's time scale by the requested method.

    Raises:
        MethodUnavailableError: If sobolev_continuous is asked for a grid
            that is not continuous.
    """
    method = KMethod(method)
    T = grid.period
    if method is KMethod.SOBOLEV_CONTINUOUS and not grid.is_continuous:
        raise MethodUnavailableError(
            f"sobolev_continuous needs a continuous time scale, got {grid.kind.value}"
        )
    if method in K_RATIO:
        return KConstant(K_RATIO[method] * T, method)

    value = min(_exact_discrete_k(grid), 0.5 * T)
    logger.debug(
        "k_constant: exact_discrete k=%.6g on %d nodes (T/k=%.4g)", value, grid.size, T / value
    )
    return KConstant(value, method)


def _exact_discrete_k(grid: TimeScaleGrid) -> float:
    """Max of ``x_j - mean(x)`` over increments ``|d_i| <= mu_i`` with sum zero.

    x_j - mean(x) is linear in the increments; one linear program per node.
    x -> -x makes the signed maximum equal to the sup of the absolute value.
    """
    mu = grid.mu
    n = grid.size
    # weight of d_l in mean(x): sum of mu_i over nodes after l, divided by T
    tail = (np.cumsum(mu[::-1])[::-1] - mu) / grid.period
    a_eq = np.ones((1, n))
    bounds = [(-m, m) for m in mu]

    best = 0.0
    for j in range(n):
        coef = (np.arange(n) < j).astype(float) - tail
        result = linprog(-coef, A_eq=a_eq, b_eq=[0.0], bounds=bounds, method="highs")
        if not result.success:
            logger.warning("k_constant: linear program for node %d failed (%s)", j, result.message)
            continue
        best = max(best, -float(result.fun))
    return best


def psi(delta: float | np.ndarray, cT: float, ck: float) -> float | np.ndarray:
    """``2 delta cos(delta) + (cT - 2 delta) cos(ck)`` on (0, pi/2).

    Raises:
        PreconditionCKError: If ck >= pi.
        ValueError: If a delta lies outside (0, pi/2).
    """
    _check_ck(ck)
    d = np.asarray(delta, dtype=float)
    if np.any(d <= 0) or np.any(d >= HALF_PI):
        raise ValueError("delta must lie in (0, pi/2)")
    result = 2.0 * d * np.cos(d) + (cT - 2.0 * d) * math.cos(ck)
    return float(result) if result.ndim == 0 else result


def delta_star(ck: float, tol: float = 1e-12) -> float:
    """Root in (0, pi/2) of ``cos(d) - d sin(d) = cos(ck)``, the maximizer of psi.

    The left side falls strictly from 1 to -pi/2, so a root exists for every
    ck in (0, pi).

    Raises:
        PreconditionCKError: If ck >= pi.
    """
    _check_ck(ck)
    target = math.cos(ck)

    def stationarity(d: float) -> float:
        return math.cos(d) - d * math.sin(d) - target

    return float(brentq(stationarity, 0.0, HALF_PI, xtol=tol, rtol=4 * np.finfo(float).eps))


def explicit_condition(cT: float, ck: float) -> float:
    """Maximum of psi in closed form: ``2 d*^2 sin(d*) + cT cos(ck)``."""
    d = delta_star(ck)
    return 2.0 * d * d * math.sin(d) + cT * math.cos(ck)


def psi_max_grid(cT: float, ck: float, samples: int = 20_001) -> float:
    """Maximum of psi over a uniform interior grid; cross-check for explicit_condition."""
    deltas = np.linspace(0.0, HALF_PI, samples + 2)[1:-1]
    return float(np.max(psi(deltas, cT, ck)))


def check_zero_in_interval(params: PendulumParams, k: KConstant) -> BoundReport:
    """Evaluate the sufficient condition for 0 in I(p0).

    ck <= pi/2 satisfies the simple criterion, pi/2 < ck < pi is decided by
    the sign of max psi and ck >= pi is reported as inapplicable.
    """
    ck = params.c * k.value
    cT = params.c * params.T
    A = ck - HALF_PI if ck > HALF_PI else None

    if ck >= math.pi:
        logger.info("check_zero_in_interval: ck=%.6g >= pi, bound inapplicable", ck)
        return BoundReport(
            ck=ck, cT=cT, delta_star=None, psi_max=None, condition_holds=False,
            strict=False, A=A, applicable=False, criterion="inapplicable",
        )

    d = delta_star(ck)
    psi_max = 2.0 * d * d * math.sin(d) + cT * math.cos(ck)
    if ck <= HALF_PI:
        # cos(ck) >= 0 makes psi_max positive, consistent with the simple criterion
        report = BoundReport(
            ck=ck, cT=cT, delta_star=d, psi_max=psi_max, condition_holds=True,
            strict=psi_max > 0, A=A, criterion="simple",
        )
    else:
        report = BoundReport(
            ck=ck, cT=cT, delta_star=d, psi_max=psi_max, condition_holds=psi_max >= 0,
            strict=psi_max > 0, A=A, criterion="psi",
        )
    logger.info(
        "check_zero_in_interval: ck=%.6g cT=%.6g psi_max=%.6g holds=%s (%s)",
        ck, cT, psi_max, report.condition_holds, report.criterion,
    )
    return report


def Psi(delta: float | np.ndarray, T: float, c: float, rule: KMethod | str) -> float | np.ndarray:
    """psi with k tied to T by the rule: k = T/2 or k = T/(2 sqrt 3)."""
    rule = KMethod(rule)
    if rule not in K_RATIO:
        raise MethodUnavailableError(f"Psi needs a k rule proportional to T, got {rule.value}")
    return psi(delta, c * T, c * K_RATIO[rule] * T)


def t_star(k_rule: KMethod | str, c: float, tol: float = 1e-6) -> float:
    """Critical period: the T where max over delta of Psi(delta, T) vanishes.

    The bracket runs from ck = pi/2, where the maximum is positive, to just
    below ck = pi, where it is negative; the maximum strictly decreases in T
    in between.

    Raises:
        MethodUnavailableError: For exact_discrete, which has no closed k(T).
    """
    rule = KMethod(k_rule)
    if rule not in K_RATIO:
        raise MethodUnavailableError(
            f"t_star needs universal or sobolev_continuous, got {rule.value}"
        )
    if not c > 0:
        raise ValueError(f"c must be positive, got {c}")
    ratio = K_RATIO[rule]

    def max_psi(T: float) -> float:
        return explicit_condition(c * T, c * ratio * T)

    lo = HALF_PI / ratio / c
    hi = math.pi / ratio / c * (1.0 - 1e-9)
    T = float(brentq(max_psi, lo, hi, xtol=tol))
    logger.info("t_star: rule=%s c=%.6g T*=%.8g (cT*=%.8g)", rule.value, c, T, c * T)
    return T


def psi_curve(cT: float, ck: float, samples: int = 200) -> pd.DataFrame:
    """Table ``delta,psi`` on a uniform interior grid of (0, pi/2).

    Raises:
        PreconditionCKError: If ck >= pi.
    """
    if samples < 2:
        raise ValueError(f"samples must be at least 2, got {samples}")
    _check_ck(ck)
    deltas = np.linspace(0.0, HALF_PI, samples + 2)[1:-1]
    return pd.DataFrame({"delta": deltas, "psi": psi(deltas, cT, ck)})
