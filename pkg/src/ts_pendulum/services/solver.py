"""Constructive operators and periodic solvers for the pendulum equation.

Two strategies are available:

- ``picard_mf``: under-relaxed fixed-point iteration on the compact operator
  ``M_f(x) = mean(x) + mean(N_f x) + K(N_f x - mean(N_f x))``.
- ``newton``: damped Newton on the node system, with the flux values
  ``v_i = phi(x^D(t_i))`` as unknowns so the speed bound |x^D| < c holds
  for every iterate.
"""

import logging
import math
from collections.abc import Callable
from dataclasses import dataclass
from enum import Enum

import numpy as np
import scipy.linalg
from scipy.optimize import brentq

from ts_pendulum.errors import (
    NoSignChangeError,
    NonZeroMeanError,
    NotConvergedError,
    SpeedLimitError,
)
from ts_pendulum.services.relativistic import (
    Forcing,
    PendulumParams,
    PeriodicSolution,
    checked_slopes,
    pendulum_residual,
    phi,
    phi_inv,
    s_functional,
)
from ts_pendulum.services.timescale import (
    GridFunction,
    cumulative_integral,
    mean,
    periodic_primitive,
    zero_mean_tolerance,
)

logger = logging.getLogger(__name__)


class SolverStrategy(Enum):
    """Iteration used to solve the periodic problem."""

    PICARD_MF = "picard_mf"
    NEWTON = "newton"


DEFAULT_MAX_ITERATIONS = {
    SolverStrategy.PICARD_MF: 10_000,
    SolverStrategy.NEWTON: 100,
}


@dataclass(frozen=True)
class SolverConfig:
    """Tolerances and strategy for the periodic solvers."""

    max_iterations: int | None = None  # None: 10^4 for Picard, 100 for Newton
    residual_tol: float | None = None  # None: 1e-8 * max(1, b)
    bisection_tol: float = 1e-12
    relaxation: float = 0.5
    strategy: SolverStrategy = SolverStrategy.NEWTON
    fd_step: float = 1e-7  # relative finite-difference step for the Newton Jacobian

    def __post_init__(self) -> None:
        object.__setattr__(self, "strategy", SolverStrategy(self.strategy))
        if self.max_iterations is not None and self.max_iterations < 1:
            raise ValueError(f"max_iterations must be positive, got {self.max_iterations}")
        if self.residual_tol is not None and not self.residual_tol > 0:
            raise ValueError(f"residual_tol must be positive, got {self.residual_tol}")
        if not self.bisection_tol > 0:
            raise ValueError(f"bisection_tol must be positive, got {self.bisection_tol}")
        if not 0 < self.relaxation <= 1:
            raise ValueError(f"relaxation must be in (0, 1], got {self.relaxation}")
        if not self.fd_step > 0:
            raise ValueError(f"fd_step must be positive, got {self.fd_step}")

    @property
    def iteration_limit(self) -> int:
        """Effective iteration cap for the configured strategy."""
        if self.max_iterations is not None:
            return self.max_iterations
        return DEFAULT_MAX_ITERATIONS[self.strategy]

    def tolerance_for(self, params: PendulumParams) -> float:
        """Certification tolerance on the residual sup-norm."""
        if self.residual_tol is not None:
            return self.residual_tol
        return 1e-8 * max(1.0, params.b)

    @classmethod
    def from_dict(cls, data: dict) -> "SolverConfig":
        """Create from dictionary."""
        return cls(
            max_iterations=data.get("max_iterations"),
            residual_tol=data.get("residual_tol"),
            bisection_tol=float(data.get("bisection_tol", 1e-12)),
            relaxation=float(data.get("relaxation", 0.5)),
            strategy=SolverStrategy(data.get("strategy", "newton")),
            fd_step=float(data.get("fd_step", 1e-7)),
        )

    def to_dict(self) -> dict:
        """Convert to dictionary."""
        return {
            "max_iterations": self.max_iterations,
            "residual_tol": self.residual_tol,
            "bisection_tol": self.bisection_tol,
            "relaxation": self.relaxation,
            "strategy": self.strategy.value,
            "fd_step": self.fd_step,
        }


@dataclass(frozen=True, eq=False)
class DirichletSolve:
    """Solution of the integro-differential problem with x(0) = x(T) = r."""

    r: float
    solution: PeriodicSolution
    converged: bool
    iterations: int


def c_of_h_objective(h: GridFunction, c: float) -> Callable[[float], float]:
    """The map ``kappa -> integral of phi_inv(h + kappa)``; strictly increasing."""
    mu = h.grid.mu
    values = h.values

    def objective(kappa: float) -> float:
        return float(np.dot(mu, phi_inv(values + kappa, c)))

    return objective


def solve_c_of_h(h: GridFunction, c: float, tol: float = 1e-12) -> float:
    """The unique constant kappa with ``integral of phi_inv(h + kappa) = 0``.

    Raises:
        NoSignChangeError: If the bracket fails to change sign.
    """
    objective = c_of_h_objective(h, c)
    bound = h.sup_norm() + c * h.grid.period
    lo, hi = -bound, bound
    f_lo, f_hi = objective(lo), objective(hi)
    if not (f_lo <= 0 <= f_hi):
        raise NoSignChangeError(
            f"c(h) bracket [{lo:.6g}, {hi:.6g}] has values {f_lo:.3e}, {f_hi:.3e}"
        )
    if f_lo == 0:
        return lo
    if f_hi == 0:
        return hi

    xtol = tol / max(1.0, h.grid.period)
    kappa = brentq(objective, lo, hi, xtol=xtol, maxiter=500)

    # Newton polish: the zero-mean precondition downstream is much tighter than xtol
    mu = h.grid.mu
    for _ in range(2):
        y = h.values + kappa
        slope = float(np.dot(mu, (1.0 + (y / c) ** 2) ** -1.5))
        kappa -= objective(kappa) / slope
    return float(kappa)


def K_operator(
    xi: GridFunction,
    c: float,
    cfg: SolverConfig | None = None,
    scale: float = 0.0,
) -> GridFunction:
    """Zero-mean solution x of ``(phi(x^D))^D = xi`` for zero-mean xi.

    ``scale`` is the size of the data xi was centered from.

    Raises:
        NonZeroMeanError: If xi does not have zero mean.
    """
    cfg = cfg or SolverConfig()
    avg = mean(xi)
    tolerance = zero_mean_tolerance(xi, scale=scale)
    if abs(avg) > tolerance:
        raise NonZeroMeanError(avg, tolerance)

    primitive = cumulative_integral(xi)
    big_xi = primitive.with_values(primitive.values, lift=0.0)
    kappa = solve_c_of_h(big_xi, c, cfg.bisection_tol)
    xdelta = big_xi.with_values(phi_inv(big_xi.values + kappa, c))
    # c(h) closes the period, so the primitive needs no further mean check
    return periodic_primitive(xdelta)


def nemitskii(x: GridFunction, params: PendulumParams, forcing: Forcing) -> GridFunction:
    """``t -> p0(t) + s - a x^D(t) - b sin x(t)``.

    Raises:
        SpeedLimitError: If a slope of x reaches c.
    """
    xdelta = checked_slopes(x, params.c)
    values = (
        forcing.p0.values + forcing.s - params.a * xdelta.values - params.b * np.sin(x.values)
    )
    return GridFunction(x.grid, values)


def mf_operator(
    x: GridFunction,
    params: PendulumParams,
    forcing: Forcing,
    cfg: SolverConfig | None = None,
) -> GridFunction:
    """``M_f(x) = mean(x) + mean(N_f x) + K(N_f x - mean(N_f x))``."""
    n = nemitskii(x, params, forcing)
    n_bar = mean(n)
    oscillation = K_operator(n.shifted(-n_bar), params.c, cfg, scale=n.sup_norm())
    return oscillation.shifted(mean(x) + n_bar)


def _certify(
    x: GridFunction,
    params: PendulumParams,
    p0: GridFunction,
    s: float | None,
    iterations: int,
    strategy: SolverStrategy,
) -> PeriodicSolution:
    """Attach slopes, s(x) and the residual sup-norm to a candidate."""
    s_of_x = s_functional(x, params.b)
    offset = s_of_x if s is None else s
    residual = pendulum_residual(x, params, Forcing(p0=p0, s=offset))
    return PeriodicSolution(
        x=x,
        xdelta=checked_slopes(x, params.c),
        s_of_x=s_of_x,
        residual_norm=residual.sup_norm(),
        residual=residual,
        iterations=iterations,
        strategy=strategy.value,
    )


class _FluxSystem:
    """Node equations in the flux unknowns ``v_i = phi(x^D(t_i))``.

    With a pinned boundary value ``r`` the unknowns are ``v_0..v_{N-1}``, the
    first node equation is dropped (it is implied by the others through the
    mean-value identity) and s is replaced by s(x). Without a pin the
    unknowns are ``v_0..v_{N-1}, x_0`` and s is fixed. In both cases the
    closure ``sum mu_i phi_inv(v_i) = 0`` makes x periodic.
    """

    def __init__(
        self,
        params: PendulumParams,
        p0: GridFunction,
        r: float | None = None,
        s: float | None = None,
    ) -> None:
        self.params = params
        self.grid = p0.grid
        self.forcing_p0 = p0
        self.p0 = p0.values
        self.mu = self.grid.mu
        self.r = r
        self.s = s
        # Scales the closure row like the node rows (both ~ 1/mu in v)
        self._closure_scale = 1.0 / float(self.mu.min()) ** 2

    @property
    def pinned(self) -> bool:
        return self.r is not None

    def pack(self, x: GridFunction) -> np.ndarray:
        v = np.asarray(phi(checked_slopes(x, self.params.c).values, self.params.c))
        if self.pinned:
            return v.copy()
        return np.append(v, x.values[0])

    def positions(self, z: np.ndarray) -> np.ndarray:
        n = self.grid.size
        x0 = self.r if self.pinned else z[n]
        slopes = phi_inv(z[:n], self.params.c)
        steps = np.cumsum(self.mu * slopes)
        return x0 + np.concatenate(([0.0], steps[:-1]))

    def unpack(self, z: np.ndarray) -> GridFunction:
        return GridFunction(self.grid, self.positions(z))

    def residual(self, z: np.ndarray) -> np.ndarray:
        n = self.grid.size
        a, b, c, T = self.params.a, self.params.b, self.params.c, self.grid.period
        v = z[:n]
        slopes = phi_inv(v, c)
        x = self.positions(z)
        sin_x = np.sin(x)
        s = b * float(np.dot(self.mu, sin_x)) / T if self.s is None else self.s

        node = (np.roll(v, -1) - v) / self.mu + a * slopes + b * sin_x - self.p0 - s
        closure = float(np.dot(self.mu, slopes)) * self._closure_scale
        if self.pinned:
            return np.append(node[1:], closure)
        return np.append(node, closure)


def _fd_jacobian(
    fun: Callable[[np.ndarray], np.ndarray], z: np.ndarray, f0: np.ndarray, step: float
) -> np.ndarray:
    """Forward-difference Jacobian, one column per unknown."""
    jac = np.empty((f0.size, z.size))
    for j in range(z.size):
        h = step * max(1.0, abs(z[j]))
        shifted = z.copy()
        shifted[j] += h
        jac[:, j] = (fun(shifted) - f0) / h
    return jac


def _newton_step(jac: np.ndarray, f: np.ndarray) -> np.ndarray:
    try:
        return scipy.linalg.solve(jac, -f)
    except (scipy.linalg.LinAlgError, ValueError):
        logger.debug("_newton_step: singular Jacobian, using least squares")
        return scipy.linalg.lstsq(jac, -f)[0]


def _run_newton(
    system: _FluxSystem,
    seed: GridFunction,
    params: PendulumParams,
    cfg: SolverConfig,
) -> tuple[PeriodicSolution, bool]:
    """Damped Newton with backtracking on the sup-norm of the node residual."""
    tol = cfg.tolerance_for(params)
    z = system.pack(seed)
    f = system.residual(z)
    norm = float(np.max(np.abs(f)))
    best = _certify(seed, params, system.forcing_p0, system.s, 0, SolverStrategy.NEWTON)

    for iteration in range(1, cfg.iteration_limit + 1):
        if best.residual_norm <= tol:
            return best, True

        jac = _fd_jacobian(system.residual, z, f, cfg.fd_step)
        dz = _newton_step(jac, f)

        damping = 1.0
        while damping >= 1.0 / 1024:
            z_try = z + damping * dz
            f_try = system.residual(z_try)
            norm_try = float(np.max(np.abs(f_try)))
            if np.isfinite(norm_try) and norm_try < (1.0 - 1e-4 * damping) * norm:
                break
            damping /= 2
        else:
            logger.debug("_run_newton: line search stalled at residual %.3e", norm)
            return best, False

        z, f, norm = z_try, f_try, norm_try
        try:
            candidate = _certify(
                system.unpack(z), params, system.forcing_p0, system.s, iteration,
                SolverStrategy.NEWTON,
            )
        except SpeedLimitError:
            # The closure gap is still large enough to push the wrap slope past c
            continue
        if candidate.residual_norm <= best.residual_norm:
            best = candidate
        logger.debug(
            "_run_newton: iteration %d, damping %.4g, residual %.3e",
            iteration, damping, candidate.residual_norm,
        )

    return best, best.residual_norm <= tol


def _run_picard(
    step: Callable[[GridFunction], GridFunction],
    seed: GridFunction,
    params: PendulumParams,
    p0: GridFunction,
    s: float | None,
    cfg: SolverConfig,
) -> tuple[PeriodicSolution, bool]:
    """Under-relaxed fixed-point iteration ``x <- x + w (M(x) - x)``."""
    tol = cfg.tolerance_for(params)
    x = seed
    best = _certify(x, params, p0, s, 0, SolverStrategy.PICARD_MF)

    for iteration in range(1, cfg.iteration_limit + 1):
        if best.residual_norm <= tol:
            return best, True
        target = step(x)
        x = x.with_values(x.values + cfg.relaxation * (target.values - x.values), lift=0.0)
        candidate = _certify(x, params, p0, s, iteration, SolverStrategy.PICARD_MF)
        if not math.isfinite(candidate.residual_norm):
            break
        if candidate.residual_norm <= best.residual_norm:
            best = candidate
        if iteration % 500 == 0:
            logger.debug("_run_picard: iteration %d, residual %.3e", iteration, best.residual_norm)

    return best, best.residual_norm <= tol


def _projected(p0: GridFunction) -> GridFunction:
    return Forcing.from_values(p0).p0


def solve_dirichlet(
    r: float,
    params: PendulumParams,
    p0: GridFunction,
    cfg: SolverConfig | None = None,
    seed: GridFunction | None = None,
) -> DirichletSolve:
    """Solve the integro-differential problem with s = s(x) and x(t0) = r.

    A converged solution is periodic (the endpoint fluxes agree), so it is a
    solution of the periodic problem with offset s(x).

    Args:
        r: Boundary value x(0) = x(T).
        params: Pendulum constants.
        p0: Forcing samples (projected to zero mean).
        cfg: Solver configuration.
        seed: Initial guess; defaults to the constant r. It is shifted so that
            its first value equals r.

    Returns:
        DirichletSolve; ``converged`` is False when the iteration cap was hit,
        in which case the best iterate is returned.
    """
    cfg = cfg or SolverConfig()
    p0 = _projected(p0)
    grid = p0.grid
    start = GridFunction.constant(grid, r) if seed is None else seed.shifted(r - seed.values[0])
    start = start.with_values(start.values, lift=0.0)

    if cfg.strategy is SolverStrategy.NEWTON:
        system = _FluxSystem(params, p0, r=r)
        solution, converged = _run_newton(system, start, params, cfg)
    else:

        def pinned_mf(x: GridFunction) -> GridFunction:
            forcing = Forcing(p0=p0, s=s_functional(x, params.b))
            n = nemitskii(x, params, forcing)
            oscillation = K_operator(n.shifted(-mean(n)), params.c, cfg, scale=n.sup_norm())
            return oscillation.shifted(r - oscillation.values[0])

        solution, converged = _run_picard(pinned_mf, start, params, p0, None, cfg)

    if converged:
        logger.debug(
            "solve_dirichlet: r=%.6g converged in %d iterations, s(x)=%.6g",
            r, solution.iterations, solution.s_of_x,
        )
    else:
        logger.warning(
            "solve_dirichlet: r=%.6g did not converge (residual %.3e after %d iterations)",
            r, solution.residual_norm, solution.iterations,
        )
    return DirichletSolve(
        r=float(r), solution=solution, converged=converged, iterations=solution.iterations
    )


def solve_periodic(
    s: float,
    params: PendulumParams,
    p0: GridFunction,
    seed: GridFunction,
    cfg: SolverConfig | None = None,
) -> PeriodicSolution:
    """Solve the periodic problem ``P x = p0 + s`` with a fixed offset.

    Raises:
        NotConvergedError: If the residual stays above tolerance; the best
            iterate is attached as ``solution``.
    """
    cfg = cfg or SolverConfig()
    p0 = _projected(p0)
    start = seed.with_values(seed.values, lift=0.0)

    if cfg.strategy is SolverStrategy.NEWTON:
        system = _FluxSystem(params, p0, s=s)
        solution, converged = _run_newton(system, start, params, cfg)
    else:
        forcing = Forcing(p0=p0, s=s)
        solution, converged = _run_picard(
            lambda x: mf_operator(x, params, forcing, cfg), start, params, p0, s, cfg
        )

    if not converged:
        raise NotConvergedError(
            f"periodic solve for s={s:.6g} stalled at residual {solution.residual_norm:.3e}",
            solution=solution,
        )
    logger.debug(
        "solve_periodic: s=%.6g converged in %d iterations (%s)",
        s, solution.iterations, solution.strategy,
    )
    return solution
