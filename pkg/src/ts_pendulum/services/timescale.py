"""Periodic time scales and discrete delta calculus.

A T-periodic time scale is stored as one period of nodes together with the
effective graininess of each node. Right-scattered nodes carry their true
jump to the next point; dense stretches are realized as fine uniform steps,
so every node has a strictly positive effective graininess and the
graininess of one period sums to T.
"""

import logging
from collections.abc import Callable, Iterable
from dataclasses import dataclass, field
from enum import Enum

import numpy as np
import pandas as pd

from ts_pendulum.errors import NonZeroMeanError, TimeScaleError

logger = logging.getLogger(__name__)

# Relative tolerance (times T * sup-norm) for membership in the zero-mean subspace
ZERO_MEAN_RTOL = 1e-10


class TimeScaleKind(Enum):
    """Supported families of periodic time scales."""

    CONTINUOUS = "continuous"  # the real line
    UNIFORM_DISCRETE = "uniform_discrete"  # hZ with h = period / resolution
    INTERVAL_UNION = "interval_union"  # closed intervals plus isolated points


def _readonly(values: Iterable[float] | np.ndarray) -> np.ndarray:
    """Copy values into an immutable float array."""
    array = np.array(values, dtype=float)
    array.setflags(write=False)
    return array


def _readonly_bool(values: np.ndarray) -> np.ndarray:
    """Copy flags into an immutable boolean array."""
    array = np.array(values, dtype=bool)
    array.setflags(write=False)
    return array


@dataclass(frozen=True)
class TimeScaleSpec:
    """Description of one period of a T-periodic closed set.

    For ``continuous`` and ``uniform_discrete`` scales ``resolution`` is the
    node count per period. For ``interval_union`` it is the number of nodes
    per unit of dense length.
    """

    period: float
    kind: TimeScaleKind = TimeScaleKind.CONTINUOUS
    resolution: int = 200
    intervals: tuple[tuple[float, float], ...] = ()
    points: tuple[float, ...] = ()

    def __post_init__(self) -> None:
        object.__setattr__(self, "kind", TimeScaleKind(self.kind))
        object.__setattr__(
            self, "intervals", tuple((float(a), float(b)) for a, b in self.intervals)
        )
        object.__setattr__(self, "points", tuple(float(p) for p in self.points))
        self._validate()

    def _validate(self) -> None:
        if not self.period > 0:
            raise TimeScaleError(f"period must be positive, got {self.period}")
        if int(self.resolution) != self.resolution or self.resolution < 1:
            raise TimeScaleError(f"resolution must be a positive integer, got {self.resolution}")

        if self.kind is not TimeScaleKind.INTERVAL_UNION:
            if self.intervals or self.points:
                raise TimeScaleError(
                    "intervals/points are only allowed for kind=interval_union, "
                    f"not {self.kind.value}"
                )
            return

        if not self.intervals and not self.points:
            raise TimeScaleError("time scale union is empty")

        for a, b in self.intervals:
            if not (0 <= a <= b < self.period):
                raise TimeScaleError(f"interval [{a}, {b}] is not inside [0, {self.period})")

        ordered = sorted(self.intervals)
        for (_, prev_end), (start, _) in zip(ordered, ordered[1:], strict=False):
            # touching intervals share their common endpoint as one node
            if start < prev_end:
                raise TimeScaleError(f"intervals overlap near t={start}")

        for p in self.points:
            if not (0 <= p < self.period):
                raise TimeScaleError(f"point {p} is not inside [0, {self.period})")
            for a, b in self.intervals:
                if a < p < b:
                    raise TimeScaleError(f"point {p} is interior to interval [{a}, {b}]")

    @classmethod
    def from_dict(cls, data: dict) -> "TimeScaleSpec":
        """Create from dictionary."""
        return cls(
            period=float(data["period"]),
            kind=TimeScaleKind(data.get("kind", "continuous")),
            resolution=int(data.get("resolution", 200)),
            intervals=tuple(tuple(iv) for iv in data.get("intervals", [])),
            points=tuple(data.get("points", [])),
        )

    def to_dict(self) -> dict:
        """Convert to dictionary."""
        return {
            "period": self.period,
            "kind": self.kind.value,
            "resolution": self.resolution,
            "intervals": [list(iv) for iv in self.intervals],
            "points": list(self.points),
        }


@dataclass(frozen=True, eq=False)
class TimeScaleGrid:
    """Discrete realization of one period of a time scale."""

    nodes: np.ndarray
    mu: np.ndarray  # effective graininess, strictly positive
    period: float
    kind: TimeScaleKind
    dense: np.ndarray = field(default_factory=lambda: np.zeros(0, dtype=bool))

    @property
    def size(self) -> int:
        """Number of nodes in one period."""
        return int(self.nodes.size)

    @property
    def is_continuous(self) -> bool:
        """Whether the grid realizes the real line."""
        return self.kind is TimeScaleKind.CONTINUOUS

    @property
    def grid_step(self) -> float:
        """Largest step used on dense parts (0 for purely discrete scales)."""
        if not self.dense.any():
            return 0.0
        return float(self.mu[self.dense].max())


def build_grid(spec: TimeScaleSpec) -> TimeScaleGrid:
    """Discretize one period of the time scale described by ``spec``.

    Raises:
        TimeScaleError: If the assembled graininess does not tile the period.
    """
    period = spec.period

    if spec.kind is TimeScaleKind.INTERVAL_UNION:
        nodes, dense = _union_nodes(spec)
    else:
        n = int(spec.resolution)
        nodes = np.arange(n) * (period / n)
        dense = np.full(n, spec.kind is TimeScaleKind.CONTINUOUS)

    successors = np.append(nodes[1:], nodes[0] + period)
    mu = successors - nodes

    if np.any(mu <= 0):
        raise TimeScaleError("nodes must be strictly increasing within one period")
    if not np.isclose(mu.sum(), period, rtol=1e-12, atol=0.0):
        raise TimeScaleError(f"graininess sums to {mu.sum()!r}, expected {period!r}")

    grid = TimeScaleGrid(
        nodes=_readonly(nodes),
        mu=_readonly(mu),
        period=float(period),
        kind=spec.kind,
        dense=_readonly_bool(dense),
    )
    logger.debug(
        "build_grid: kind=%s, %d nodes, period=%g, step=%g",
        spec.kind.value, grid.size, period, grid.grid_step,
    )
    return grid


def _union_nodes(spec: TimeScaleSpec) -> tuple[np.ndarray, np.ndarray]:
    """Collect the nodes of an interval union and mark right-dense ones."""
    chunks: list[np.ndarray] = []
    flags: list[np.ndarray] = []

    for a, b in spec.intervals:
        if b == a:
            chunks.append(np.array([a]))
            flags.append(np.array([False]))
            continue
        steps = max(1, round(spec.resolution * (b - a)))
        block = np.linspace(a, b, steps + 1)
        chunks.append(block)
        # The right endpoint is right-scattered: its jump reaches the next block
        flags.append(np.arange(block.size) < block.size - 1)

    if spec.points:
        chunks.append(np.array(spec.points))
        flags.append(np.zeros(len(spec.points), dtype=bool))

    nodes = np.concatenate(chunks)
    dense = np.concatenate(flags)
    order = np.argsort(nodes, kind="stable")
    nodes, dense = nodes[order], dense[order]

    # Points that coincide with interval endpoints are the same node
    keep = np.append(True, np.diff(nodes) > 0)
    merged_dense = dense.copy()
    for i in np.flatnonzero(~keep):
        merged_dense[i - 1] = merged_dense[i - 1] or dense[i]
    return nodes[keep], merged_dense[keep]


@dataclass(frozen=True, eq=False)
class GridFunction:
    """Real samples attached to the nodes of a TimeScaleGrid.

    ``lift`` is the jump picked up when wrapping past the end of the period:
    the value at ``t0 + period`` is ``values[0] + lift``. Periodic functions
    have ``lift == 0``; a solution that rotates once per period has
    ``lift == 2*pi``.
    """

    grid: TimeScaleGrid
    values: np.ndarray
    lift: float = 0.0

    def __post_init__(self) -> None:
        values = _readonly(self.values)
        if values.shape != (self.grid.size,):
            raise ValueError(
                f"GridFunction needs {self.grid.size} values, got shape {values.shape}"
            )
        object.__setattr__(self, "values", values)
        object.__setattr__(self, "lift", float(self.lift))

    @classmethod
    def constant(cls, grid: TimeScaleGrid, value: float) -> "GridFunction":
        """Constant function on the grid."""
        return cls(grid, np.full(grid.size, float(value)))

    @classmethod
    def from_callable(
        cls, grid: TimeScaleGrid, fn: Callable[[np.ndarray], np.ndarray]
    ) -> "GridFunction":
        """Sample a vectorized callable on the grid, recording its wrap lift."""
        values = np.asarray(fn(grid.nodes), dtype=float) * np.ones(grid.size)
        t0 = grid.nodes[:1]
        lift = float(np.ravel(fn(t0 + grid.period))[0] - np.ravel(fn(t0))[0])
        return cls(grid, values, lift)

    def with_values(self, values: np.ndarray, lift: float | None = None) -> "GridFunction":
        """New function on the same grid."""
        return GridFunction(self.grid, values, self.lift if lift is None else lift)

    def shifted(self, offset: float) -> "GridFunction":
        """Add a constant to every value."""
        return GridFunction(self.grid, self.values + offset, self.lift)

    @property
    def successor_values(self) -> np.ndarray:
        """Values at sigma(t_i), lifted at the wrap."""
        nxt = np.roll(self.values, -1)
        nxt[-1] += self.lift
        return nxt

    def sup_norm(self) -> float:
        """Maximum absolute value over the nodes."""
        return float(np.max(np.abs(self.values)))

    def to_frame(self) -> pd.DataFrame:
        """Two-column table ``t,value``."""
        return pd.DataFrame({"t": self.grid.nodes, "value": self.values})

    @classmethod
    def from_frame(
        cls, grid: TimeScaleGrid, frame: pd.DataFrame, column: str = "value"
    ) -> "GridFunction":
        """Build from a ``t,<column>`` table.

        Samples on other nodes are interpolated periodically onto the grid.
        """
        t = frame["t"].to_numpy(dtype=float)
        v = frame[column].to_numpy(dtype=float)
        if t.size == grid.size and np.allclose(t, grid.nodes, rtol=0.0, atol=1e-9 * grid.period):
            return cls(grid, v)
        logger.info(
            "from_frame: interpolating %d samples onto %d grid nodes", t.size, grid.size
        )
        return cls(grid, np.interp(grid.nodes, t, v, period=grid.period))


def delta_derivative(f: GridFunction) -> GridFunction:
    """Forward delta derivative ``(f(sigma(t)) - f(t)) / mu(t)``."""
    g = (f.successor_values - f.values) / f.grid.mu
    return GridFunction(f.grid, g)


def delta_integral(f: GridFunction) -> float:
    """Delta integral of f over one period (left-endpoint rule)."""
    return float(np.dot(f.grid.mu, f.values))


def mean(f: GridFunction) -> float:
    """Delta average of f over one period."""
    return delta_integral(f) / f.grid.period


def project_zero_mean(f: GridFunction) -> GridFunction:
    """Subtract the delta average."""
    return f.shifted(-mean(f))


def zero_mean_tolerance(
    f: GridFunction, rtol: float = ZERO_MEAN_RTOL, scale: float = 0.0
) -> float:
    """Scale-aware tolerance for the zero-mean precondition.

    ``scale`` is the size of the data f was projected from; rounding left by
    the projection is relative to it, not to f.
    """
    return rtol * f.grid.period * max(f.sup_norm(), scale)


def cumulative_integral(f: GridFunction) -> GridFunction:
    """Integral of f from t0 to each node.

    The result carries the full-period integral as its lift, so its delta
    derivative reproduces f exactly at every node.
    """
    increments = f.grid.mu * f.values
    values = np.concatenate(([0.0], np.cumsum(increments[:-1])))
    return GridFunction(f.grid, values, lift=float(increments.sum()))


def antiderivative_zero_mean(f: GridFunction, rtol: float = ZERO_MEAN_RTOL) -> GridFunction:
    """Periodic primitive of a zero-mean function, normalized to zero mean.

    Raises:
        NonZeroMeanError: If f is not in the zero-mean subspace.
    """
    avg = mean(f)
    tolerance = zero_mean_tolerance(f, rtol)
    if abs(avg) > tolerance:
        raise NonZeroMeanError(avg, tolerance)

    return periodic_primitive(f)


def periodic_primitive(f: GridFunction) -> GridFunction:
    """Zero-mean primitive with the wrap jump dropped; exact when mean(f) = 0."""
    primitive = cumulative_integral(f)
    return project_zero_mean(primitive.with_values(primitive.values, lift=0.0))
