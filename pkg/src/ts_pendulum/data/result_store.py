"""CSV tables and JSON reports written to an emit directory."""

import json
import logging
import math
from enum import Enum
from pathlib import Path
from typing import Any

import numpy as np
import pandas as pd

from ts_pendulum.services.relativistic import PeriodicSolution
from ts_pendulum.services.timescale import GridFunction, TimeScaleGrid

logger = logging.getLogger(__name__)

# 17 significant digits
FLOAT_FORMAT = "%.16e"


def _json_serializer(obj: Any) -> Any:
    """JSON serializer for non-standard types."""
    if isinstance(obj, np.generic):
        return obj.item()
    if isinstance(obj, np.ndarray):
        return obj.tolist()
    if isinstance(obj, Enum):
        return obj.value
    if isinstance(obj, Path):
        return obj.as_posix()
    raise TypeError(f"Object of type {type(obj)} is not JSON serializable")


def _finite(value: Any) -> Any:
    """Replace non-finite floats by None so reports stay valid JSON."""
    if isinstance(value, dict):
        return {key: _finite(item) for key, item in value.items()}
    if isinstance(value, (list, tuple)):
        return [_finite(item) for item in value]
    if isinstance(value, float) and not math.isfinite(value):
        return None
    return value


class ResultStore:
    """Writes run artifacts; a store without a directory discards them."""

    def __init__(self, emit_dir: Path | None = None) -> None:
        """Initialize store.

        Args:
            emit_dir: Output directory, created on first write.
        """
        self._dir = Path(emit_dir) if emit_dir is not None else None

    @property
    def emit_dir(self) -> Path | None:
        """Output directory."""
        return self._dir

    @property
    def enabled(self) -> bool:
        """Whether artifacts are written."""
        return self._dir is not None

    def _target(self, name: str) -> Path | None:
        if self._dir is None:
            return None
        self._dir.mkdir(parents=True, exist_ok=True)
        return self._dir / name

    def write_table(self, name: str, frame: pd.DataFrame) -> Path | None:
        """Write a table as CSV: header row, comma separated, ``\\n`` endings."""
        path = self._target(f"{name}.csv")
        if path is None:
            return None
        frame.to_csv(
            path, index=False, float_format=FLOAT_FORMAT, lineterminator="\n", encoding="utf-8"
        )
        logger.info("wrote %s (%d rows)", path, len(frame))
        return path

    def write_report(self, name: str, report: dict) -> Path | None:
        """Write a JSON report."""
        path = self._target(f"{name}.json")
        if path is None:
            return None
        with open(path, "w", encoding="utf-8", newline="\n") as f:
            json.dump(_finite(report), f, indent=2, sort_keys=True, default=_json_serializer)
            f.write("\n")
        logger.info("wrote %s", path)
        return path

    def write_solution(self, name: str, solution: PeriodicSolution) -> Path | None:
        """Write a solution as ``t,x,xdelta,residual``."""
        return self.write_table(name, solution.to_frame())

    @staticmethod
    def read_table(path: Path) -> pd.DataFrame:
        """Read a CSV table written by this store (or by hand)."""
        return pd.read_csv(path, encoding="utf-8")

    @classmethod
    def read_function(
        cls, path: Path, grid: TimeScaleGrid, column: str = "value"
    ) -> GridFunction:
        """Read a ``t,<column>`` CSV onto the grid.

        Raises:
            ValueError: If the required columns are missing.
        """
        frame = cls.read_table(path)
        missing = {"t", column} - set(frame.columns)
        if missing:
            raise ValueError(f"{path} is missing columns {sorted(missing)}")
        return GridFunction.from_frame(grid, frame, column)

    @classmethod
    def read_solution(cls, path: Path, grid: TimeScaleGrid) -> GridFunction:
        """Read the ``x`` column of a solution table, or ``value`` of a plain function.

        Raises:
            ValueError: If neither column is present.
        """
        columns = set(cls.read_table(path).columns)
        column = "x" if "x" in columns else "value"
        return cls.read_function(path, grid, column)
