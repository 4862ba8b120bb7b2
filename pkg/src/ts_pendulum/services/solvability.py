"""Solvability interval estimation for the forced pendulum.

The offsets s for which the periodic problem is solvable form a compact
interval [d(p0), D(p0)] inside [-b, b]. Every solution of the pinned
integro-differential problem x(0) = x(T) = r is a periodic solution with
offset s(x), so sweeping r over [0, 2 pi) and collecting s(x) yields
certified members of the interval. The estimate is an inner one.
"""

import hashlib
import logging
import math
from collections.abc import Callable, Iterable, Sequence
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import TypeVar

import numpy as np
import pandas as pd

from ts_pendulum.errors import AllDivergedError, NonZeroMeanError, NotConvergedError
from ts_pendulum.services.relativistic import (
    BoundRole,
    Forcing,
    InequalityReport,
    PendulumParams,
    PeriodicSolution,
    check_lower_upper,
    equilibrium_branches,
)
from ts_pendulum.services.solver import (
    DirichletSolve,
    SolverConfig,
    solve_dirichlet,
    solve_periodic,
)
from ts_pendulum.services.timescale import (
    GridFunction,
    TimeScaleGrid,
    mean,
    project_zero_mean,
    zero_mean_tolerance,
)

logger = logging.getLogger(__name__)

TWO_PI = 2.0 * math.pi

# Geometric distinctness: sup-norm distance after the best 2*pi*k shift
CLUSTER_TOL = 1e-3 * TWO_PI

# Randomized seeds added to the multiplicity bank when the analyzer has an RNG seed
RANDOM_SEED_COUNT = 8

# Random seed waves stay below this fraction of the speed bound
RANDOM_SLOPE_FRACTION = 0.5

# Slack allowed when checking that endpoint movement shrinks with the perturbation
TREND_SLACK = 1e-6

_T = TypeVar("_T")
_R = TypeVar("_R")


@dataclass(frozen=True, eq=False)
class SweepRow:
    """One pinned solve of the r-sweep."""

    r: float
    s_of_x: float
    residual: float
    converged: bool
    seed: str = "constant"  # constant or neighbor
    solution: PeriodicSolution | None = field(default=None, repr=False)


@dataclass(frozen=True, eq=False)
class SolvabilityEstimate:
    """Inner estimate [d_hat, D_hat] of the solvability interval."""

    d_hat: float
    D_hat: float
    sweep: list[SweepRow]
    p0_id: str
    b: float
    offset: float = 0.0  # mean removed from the raw forcing samples

    @property
    def r_samples(self) -> int:
        """Number of r values swept."""
        return len(self.sweep)

    @property
    def converged_rows(self) -> list[SweepRow]:
        """Rows whose pinned solve converged."""
        return [row for row in self.sweep if row.converged]

    @property
    def raw_interval(self) -> tuple[float, float]:
        """Interval for the offset added to the unprojected forcing samples."""
        return self.d_hat - self.offset, self.D_hat - self.offset

    def contains(self, s: float, margin: float = 0.0) -> bool:
        """Whether s lies in the estimate shrunk by ``margin`` on each side."""
        return self.d_hat + margin <= s <= self.D_hat - margin

    def to_frame(self) -> pd.DataFrame:
        """Sweep table ``r,s_of_x,residual,converged``."""
        return pd.DataFrame(
            {
                "r": [row.r for row in self.sweep],
                "s_of_x": [row.s_of_x for row in self.sweep],
                "residual": [row.residual for row in self.sweep],
                "converged": [row.converged for row in self.sweep],
            }
        )

    def summary(self) -> dict:
        """Structured summary of the estimate."""
        return {
            "d_hat": self.d_hat,
            "D_hat": self.D_hat,
            "b": self.b,
            "r_samples": self.r_samples,
            "converged_rows": len(self.converged_rows),
            "offset": self.offset,
            "p0_id": self.p0_id,
        }


@dataclass(frozen=True)
class ContinuityRow:
    """Endpoint movement caused by one perturbation of p0."""

    perturbation_norm: float
    d_shift: float
    D_shift: float

    @property
    def movement(self) -> float:
        """Largest endpoint movement."""
        return max(self.d_shift, self.D_shift)


@dataclass(frozen=True, eq=False)
class ContinuityProbe:
    """Endpoint movement table for a sequence of perturbations."""

    base: SolvabilityEstimate
    rows: list[ContinuityRow]

    @property
    def is_monotone(self) -> bool:
        """Whether movement does not grow as the perturbation shrinks."""
        ordered = sorted(self.rows, key=lambda row: row.perturbation_norm, reverse=True)
        return all(
            later.movement <= earlier.movement + TREND_SLACK
            for earlier, later in zip(ordered, ordered[1:], strict=False)
        )

    def to_frame(self) -> pd.DataFrame:
        """Table ``perturbation_norm,d_shift,D_shift``."""
        return pd.DataFrame(
            {
                "perturbation_norm": [row.perturbation_norm for row in self.rows],
                "d_shift": [row.d_shift for row in self.rows],
                "D_shift": [row.D_shift for row in self.rows],
            }
        )


@dataclass(frozen=True, eq=False)
class OrderedBracket:
    """Strict lower/upper pair built from two sweep solutions.

    ``lower`` solves the problem at an offset above s, ``upper`` at an offset
    below s shifted by ``2 pi k`` so that lower < upper everywhere.
    """

    s: float
    lower: GridFunction
    upper: GridFunction
    shift: int
    lower_report: InequalityReport
    upper_report: InequalityReport

    @property
    def certified(self) -> bool:
        """Whether both inequalities hold strictly and the pair is ordered."""
        ordered = bool(np.all(self.lower.values < self.upper.values))
        return ordered and self.lower_report.is_strict and self.upper_report.is_strict

    def midpoint(self) -> GridFunction:
        """Average of the pair, a seed between the two bounds."""
        return self.lower.with_values(0.5 * (self.lower.values + self.upper.values), lift=0.0)


@dataclass(frozen=True, eq=False)
class MultiplicityReport:
    """Periodic solutions found at one offset, grouped modulo 2 pi."""

    s: float
    solutions: list[PeriodicSolution]
    classes: list[list[int]]
    seed_count: int = 0

    @property
    def distinct_count(self) -> int:
        """Number of geometrically distinct solutions."""
        return len(self.classes)

    @property
    def separation(self) -> float:
        """Smallest distance modulo 2 pi between class representatives."""
        reps = [self.solutions[members[0]].x for members in self.classes]
        distances = [
            distance_mod_2pi(reps[i], reps[j])
            for i in range(len(reps))
            for j in range(i + 1, len(reps))
        ]
        return min(distances) if distances else math.inf


def nested_r_grid(count: int) -> np.ndarray:
    """Sorted first ``count`` points of the base-2 van der Corput sequence on [0, 2 pi).

    The grid of n points is a subset of the grid of every m > n points, and
    it is the uniform grid when n is a power of two.
    """
    fractions = np.zeros(count)
    for k in range(count):
        value, scale, rest = 0.0, 0.5, k
        while rest:
            rest, bit = divmod(rest, 2)
            value += bit * scale
            scale *= 0.5
        fractions[k] = value
    return np.sort(TWO_PI * fractions)


def p0_digest(p0: GridFunction) -> str:
    """Content digest of a forcing and the nodes it lives on."""
    digest = hashlib.sha256()
    digest.update(np.ascontiguousarray(p0.grid.nodes, dtype="<f8").tobytes())
    digest.update(np.ascontiguousarray(p0.values, dtype="<f8").tobytes())
    return digest.hexdigest()[:16]


def distance_mod_2pi(x1: GridFunction, x2: GridFunction) -> float:
    """``min_k ||x1 - x2 - 2 pi k||`` over integers k."""
    diff = x1.values - x2.values
    k0 = round(float(diff.mean()) / TWO_PI)
    return min(float(np.max(np.abs(diff - TWO_PI * k))) for k in (k0 - 1, k0, k0 + 1))


def geometrically_equivalent(x1: GridFunction, x2: GridFunction, tol: float = CLUSTER_TOL) -> bool:
    """Whether two solutions differ by a multiple of 2 pi (within tol)."""
    return distance_mod_2pi(x1, x2) <= tol


def cluster_modulo_2pi(
    solutions: Sequence[PeriodicSolution], tol: float = CLUSTER_TOL
) -> list[list[int]]:
    """Group solution indices into classes of geometrically equal solutions.

    Each solution joins the first class whose representative is within tol.
    """
    classes: list[list[int]] = []
    for index, solution in enumerate(solutions):
        for members in classes:
            if geometrically_equivalent(solutions[members[0]].x, solution.x, tol):
                members.append(index)
                break
        else:
            classes.append([index])
    return classes


class SolvabilityAnalyzer:
    """Estimates the solvability interval and searches for multiple solutions.

    Independent solves (sweep rows, seed bank entries) run on a thread pool
    of ``jobs`` workers; results are always reduced in input order.
    """

    def __init__(
        self,
        params: PendulumParams,
        cfg: SolverConfig | None = None,
        jobs: int = 1,
        seed: int | None = None,
    ) -> None:
        """Initialize analyzer.

        Args:
            params: Pendulum constants.
            cfg: Solver configuration (defaults if not provided).
            jobs: Worker threads for independent solves.
            seed: RNG seed for randomized multiplicity seeds (None disables them).
        """
        if jobs < 1:
            raise ValueError(f"jobs must be positive, got {jobs}")
        self._params = params
        self._cfg = cfg or SolverConfig()
        self._jobs = jobs
        self._seed = seed

    @property
    def seed(self) -> int | None:
        """RNG seed of the randomized seed bank."""
        return self._seed

    @property
    def params(self) -> PendulumParams:
        """Pendulum constants."""
        return self._params

    @property
    def cfg(self) -> SolverConfig:
        """Solver configuration."""
        return self._cfg

    def _map(self, fn: Callable[[_T], _R], items: Iterable[_T]) -> list[_R]:
        items = list(items)
        if self._jobs == 1 or len(items) < 2:
            return [fn(item) for item in items]
        with ThreadPoolExecutor(max_workers=self._jobs) as pool:
            return list(pool.map(fn, items))

    def sweep_interval(self, p0: GridFunction, r_samples: int = 64) -> SolvabilityEstimate:
        """Estimate [d(p0), D(p0)] from pinned solves on a nested r-grid.

        The r values are those of ``nested_r_grid``, so a larger sample count
        sweeps a superset of the offsets of a smaller one. Rows are ordered
        by r. Rows that fail from the constant seed are retried from the
        nearest converged row's solution.

        Raises:
            ValueError: If fewer than 8 samples are requested.
            AllDivergedError: If no row converges.
        """
        if r_samples < 8:
            raise ValueError(f"r_samples must be at least 8, got {r_samples}")

        forcing = Forcing.from_values(p0)
        projected = forcing.p0
        rs = [float(r) for r in nested_r_grid(r_samples)]

        solves = self._map(
            lambda r: solve_dirichlet(r, self._params, projected, self._cfg), rs
        )
        rows = [self._row(solve, "constant") for solve in solves]

        failed = [i for i, row in enumerate(rows) if not row.converged]
        if failed and len(failed) < len(rows):
            retries = self._map(lambda i: self._retry_from_neighbor(i, rows, projected), failed)
            for i, retry in zip(failed, retries, strict=True):
                if retry is not None:
                    rows[i] = retry

        converged = [row for row in rows if row.converged]
        if not converged:
            frame = SolvabilityEstimate(0.0, 0.0, rows, p0_digest(projected), self._params.b)
            raise AllDivergedError(
                f"none of the {r_samples} pinned solves converged", table=frame.to_frame()
            )

        values = [row.s_of_x for row in converged]
        estimate = SolvabilityEstimate(
            d_hat=min(values),
            D_hat=max(values),
            sweep=rows,
            p0_id=p0_digest(projected),
            b=self._params.b,
            offset=forcing.removed_mean,
        )
        logger.info(
            "sweep_interval: [%.6g, %.6g] from %d/%d converged rows (p0 %s)",
            estimate.d_hat, estimate.D_hat, len(converged), r_samples, estimate.p0_id,
        )
        return estimate

    @staticmethod
    def _row(solve: DirichletSolve, seed: str) -> SweepRow:
        return SweepRow(
            r=solve.r,
            s_of_x=solve.solution.s_of_x,
            residual=solve.solution.residual_norm,
            converged=solve.converged,
            seed=seed,
            solution=solve.solution if solve.converged else None,
        )

    def _retry_from_neighbor(
        self, index: int, rows: list[SweepRow], p0: GridFunction
    ) -> SweepRow | None:
        n = len(rows)
        for step in range(1, n // 2 + 1):
            for j in ((index - step) % n, (index + step) % n):
                neighbor = rows[j]
                if neighbor.converged and neighbor.seed == "constant" and neighbor.solution:
                    solve = solve_dirichlet(
                        rows[index].r, self._params, p0, self._cfg, seed=neighbor.solution.x
                    )
                    return self._row(solve, "neighbor") if solve.converged else None
        return None

    def continuity_probe(
        self,
        p0: GridFunction,
        perturbations: Sequence[GridFunction],
        r_samples: int = 64,
    ) -> ContinuityProbe:
        """Re-sweep for each ``p0 + dp`` and tabulate endpoint movement.

        Raises:
            NonZeroMeanError: If a perturbation does not have zero mean.
        """
        base = self.sweep_interval(p0, r_samples)
        rows: list[ContinuityRow] = []
        for dp in perturbations:
            avg = mean(dp)
            tolerance = zero_mean_tolerance(dp)
            if abs(avg) > tolerance:
                raise NonZeroMeanError(avg, tolerance)
            perturbed = self.sweep_interval(p0.with_values(p0.values + dp.values), r_samples)
            rows.append(
                ContinuityRow(
                    perturbation_norm=dp.sup_norm(),
                    d_shift=abs(perturbed.d_hat - base.d_hat),
                    D_shift=abs(perturbed.D_hat - base.D_hat),
                )
            )

        probe = ContinuityProbe(base=base, rows=rows)
        if not probe.is_monotone:
            logger.warning("continuity_probe: endpoint movement does not shrink with ||dp||")
        return probe

    def ordered_bracket(
        self, p0: GridFunction, estimate: SolvabilityEstimate, s: float
    ) -> OrderedBracket | None:
        """Strict lower/upper pair for s from the extreme sweep solutions.

        The solution at the largest swept offset is a strict lower solution
        for s and the one at the smallest, shifted up by 2 pi k, a strict
        upper one. Returns None when the sweep has no solutions on both
        sides of s.
        """
        below = [row for row in estimate.converged_rows if row.s_of_x < s and row.solution]
        above = [row for row in estimate.converged_rows if row.s_of_x > s and row.solution]
        if not below or not above:
            return None

        upper_row = min(below, key=lambda row: row.s_of_x)
        lower_row = max(above, key=lambda row: row.s_of_x)
        assert upper_row.solution is not None and lower_row.solution is not None
        lower = lower_row.solution.x
        upper = upper_row.solution.x

        # first k with lower < upper + 2 pi k everywhere
        shift = math.floor(float(np.max(lower.values - upper.values)) / TWO_PI) + 1
        upper = upper.shifted(TWO_PI * shift)

        forcing = Forcing.from_values(p0, s)
        return OrderedBracket(
            s=s,
            lower=lower,
            upper=upper,
            shift=shift,
            lower_report=check_lower_upper(lower, BoundRole.LOWER, self._params, forcing),
            upper_report=check_lower_upper(upper, BoundRole.UPPER, self._params, forcing),
        )

    def find_multiple_solutions(
        self,
        p0: GridFunction,
        s: float,
        estimate: SolvabilityEstimate | None = None,
        margin: float = 0.0,
        r_grid: int = 8,
    ) -> MultiplicityReport:
        """Search for geometrically distinct periodic solutions at offset s.

        The seed bank holds constants r and r + pi on an r-grid, the two
        equilibrium branches (when |s| <= b), the solutions of the sweep rows
        closest to s and the midpoint of the ordered lower/upper bracket.
        An analyzer with an RNG seed adds ``RANDOM_SEED_COUNT`` random
        zero-mean waves around random levels; the same seed gives the same
        bank. A count of 1 means the search failed, not that a second
        solution does not exist.

        Raises:
            ValueError: If an estimate is given and s is not inside it by margin.
        """
        if estimate is not None and not estimate.contains(s, margin):
            raise ValueError(
                f"s={s:.6g} is not inside [{estimate.d_hat:.6g}, {estimate.D_hat:.6g}] "
                f"by margin {margin:.3g}"
            )

        projected = Forcing.from_values(p0).p0
        grid = projected.grid
        seeds: list[GridFunction] = []
        for k in range(r_grid):
            r = TWO_PI * k / r_grid
            seeds.append(GridFunction.constant(grid, r))
            seeds.append(GridFunction.constant(grid, r + math.pi))
        if abs(s) <= self._params.b:
            branches = equilibrium_branches(s, self._params.b)
            seeds.extend(GridFunction.constant(grid, x) for x in branches)

        if estimate is not None:
            nearby = sorted(estimate.converged_rows, key=lambda row: abs(row.s_of_x - s))[:2]
            seeds.extend(row.solution.x for row in nearby if row.solution is not None)
            bracket = self.ordered_bracket(projected, estimate, s)
            if bracket is not None:
                seeds.append(bracket.midpoint())
        if self._seed is not None:
            seeds.extend(self._random_seeds(grid))

        def attempt(seed: GridFunction) -> PeriodicSolution | None:
            try:
                return solve_periodic(s, self._params, projected, seed, self._cfg)
            except NotConvergedError as e:
                logger.debug("find_multiple_solutions: seed rejected (%s)", e)
                return None

        solutions = [sol for sol in self._map(attempt, seeds) if sol is not None]
        classes = cluster_modulo_2pi(solutions)
        report = MultiplicityReport(
            s=s, solutions=solutions, classes=classes, seed_count=len(seeds)
        )
        logger.info(
            "find_multiple_solutions: s=%.6g, %d/%d converged seeds, %d distinct solutions",
            s, len(solutions), len(seeds), report.distinct_count,
        )
        return report

    def _random_seeds(self, grid: TimeScaleGrid) -> list[GridFunction]:
        # one generator per call: repeated searches draw the same bank
        rng = np.random.default_rng(self._seed)
        max_amplitude = RANDOM_SLOPE_FRACTION * self._params.c * grid.period / TWO_PI
        seeds = []
        for _ in range(RANDOM_SEED_COUNT):
            level = rng.uniform(0.0, TWO_PI)
            amplitude = rng.uniform(0.0, max_amplitude)
            phase = rng.uniform(0.0, TWO_PI)
            wave = amplitude * np.sin(TWO_PI * grid.nodes / grid.period + phase)
            seeds.append(project_zero_mean(GridFunction(grid, wave)).shifted(level))
        return seeds
