"""Service provider for ts-pendulum.

Builds the grid, constants, forcing and analyzer of one run from its
configuration.
"""

import dataclasses
import logging
from dataclasses import dataclass
from pathlib import Path

from ts_pendulum.config import RunConfig
from ts_pendulum.data.result_store import ResultStore
from ts_pendulum.errors import ConfigError
from ts_pendulum.services.relativistic import Forcing, PendulumParams
from ts_pendulum.services.solvability import SolvabilityAnalyzer
from ts_pendulum.services.solver import SolverConfig
from ts_pendulum.services.timescale import TimeScaleGrid, build_grid

logger = logging.getLogger(__name__)


@dataclass
class ServiceProvider:
    """Container for the services of one run."""

    config: RunConfig
    grid: TimeScaleGrid
    forcing: Forcing
    solver: SolverConfig
    analyzer: SolvabilityAnalyzer
    store: ResultStore

    @property
    def params(self) -> PendulumParams:
        """Pendulum constants."""
        return self.config.params

    @classmethod
    def create(
        cls,
        config: RunConfig,
        emit_dir: Path | None = None,
        jobs: int = 1,
        residual_tol: float | None = None,
    ) -> "ServiceProvider":
        """Create a service provider for a loaded configuration.

        Args:
            config: Run configuration.
            emit_dir: Directory for CSV/JSON artifacts (None discards them).
            jobs: Worker threads for independent solves.
            residual_tol: Overrides the configured certification tolerance.

        Returns:
            Configured ServiceProvider instance.

        Raises:
            ConfigError: If the forcing CSV cannot be read.
        """
        grid = build_grid(config.timescale)
        store = ResultStore(emit_dir)

        solver = config.solver
        if residual_tol is not None:
            solver = dataclasses.replace(solver, residual_tol=residual_tol)

        forcing = cls._build_forcing(config, grid)
        analyzer = SolvabilityAnalyzer(config.params, solver, jobs=jobs, seed=config.seed)
        logger.debug(
            "ServiceProvider: %d nodes, ||p0||=%.6g, strategy=%s, jobs=%d",
            grid.size, forcing.p0.sup_norm(), solver.strategy.value, jobs,
        )
        return cls(
            config=config,
            grid=grid,
            forcing=forcing,
            solver=solver,
            analyzer=analyzer,
            store=store,
        )

    @staticmethod
    def _build_forcing(config: RunConfig, grid: TimeScaleGrid) -> Forcing:
        spec = config.forcing
        csv_path = config.forcing_csv_path()
        if csv_path is None:
            return Forcing.from_series(grid, spec.series, spec.s)
        try:
            p0 = ResultStore.read_function(csv_path, grid)
        except (OSError, ValueError, KeyError) as e:
            raise ConfigError(
                f"cannot read forcing CSV {csv_path}: {e}", field="forcing.csv"
            ) from e
        return Forcing.from_values(p0, spec.s)
