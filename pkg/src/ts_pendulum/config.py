"""Run configuration for ts-pendulum."""

import json
import math
from collections.abc import Callable
from dataclasses import dataclass, field
from pathlib import Path
from typing import TypeVar

from ts_pendulum.errors import ConfigError
from ts_pendulum.services.relativistic import PendulumParams
from ts_pendulum.services.solver import SolverConfig
from ts_pendulum.services.timescale import TimeScaleSpec

_T = TypeVar("_T")

_TOP_KEYS = {"timescale", "params", "forcing", "solver", "seed"}
_SECTION_KEYS = {
    "timescale": {"period", "kind", "resolution", "intervals", "points"},
    "params": {"a", "b", "c", "T"},
    "forcing": {"series", "csv", "s"},
    "solver": {
        "max_iterations",
        "residual_tol",
        "bisection_tol",
        "relaxation",
        "strategy",
        "fd_step",
    },
}


def _check_keys(data: object, allowed: set[str], prefix: str) -> dict:
    """Reject anything but a mapping with known keys."""
    if not isinstance(data, dict):
        raise ConfigError("expected an object", field=prefix or None)
    for key in data:
        if key not in allowed:
            name = f"{prefix}.{key}" if prefix else key
            raise ConfigError(f"unknown key '{key}'", field=name)
    return data


@dataclass(frozen=True)
class ForcingSpec:
    """Where p0 comes from: Fourier terms or a ``t,value`` CSV file."""

    series: tuple[tuple[float, float, float], ...] = ()
    csv: Path | None = None  # relative paths resolve against the config file
    s: float = 0.0

    def __post_init__(self) -> None:
        if self.series and self.csv is not None:
            raise ValueError("forcing takes either series or csv, not both")

    @classmethod
    def from_dict(cls, data: dict) -> "ForcingSpec":
        """Create from dictionary."""
        series = []
        for term in data.get("series", []):
            if len(term) != 3:
                raise ValueError(f"series terms are [k, cos_k, sin_k], got {term}")
            series.append((float(term[0]), float(term[1]), float(term[2])))
        csv = data.get("csv")
        return cls(
            series=tuple(series),
            csv=Path(csv) if csv is not None else None,
            s=float(data.get("s", 0.0)),
        )

    def to_dict(self) -> dict:
        """Convert to dictionary."""
        data: dict = {"s": self.s}
        if self.series:
            data["series"] = [list(term) for term in self.series]
        if self.csv is not None:
            data["csv"] = self.csv.as_posix()
        return data


@dataclass
class RunConfig:
    """Everything one run needs, read from a single JSON document."""

    timescale: TimeScaleSpec
    params: PendulumParams
    forcing: ForcingSpec = field(default_factory=ForcingSpec)
    solver: SolverConfig = field(default_factory=SolverConfig)
    seed: int | None = None

    # Paths
    config_path: Path | None = None

    @property
    def base_dir(self) -> Path:
        """Directory relative forcing paths resolve against."""
        return self.config_path.parent if self.config_path else Path.cwd()

    def forcing_csv_path(self) -> Path | None:
        """Absolute path of the forcing CSV, if one is configured."""
        if self.forcing.csv is None:
            return None
        if self.forcing.csv.is_absolute():
            return self.forcing.csv
        return self.base_dir / self.forcing.csv

    @classmethod
    def load(cls, path: Path) -> "RunConfig":
        """Load configuration from file.

        Args:
            path: JSON document to read.

        Returns:
            Validated configuration.

        Raises:
            ConfigError: On syntax errors (with line), unknown keys or
                invalid values (with field).
        """
        path = Path(path)
        try:
            text = path.read_text(encoding="utf-8")
        except OSError as e:
            raise ConfigError(f"cannot read config {path}: {e.strerror}") from e

        try:
            data = json.loads(text)
        except json.JSONDecodeError as e:
            raise ConfigError(f"invalid JSON: {e.msg}", line=e.lineno) from e

        return cls._from_dict(data, path)

    @classmethod
    def _from_dict(cls, data: dict, config_path: Path | None = None) -> "RunConfig":
        """Create config from dictionary."""
        _check_keys(data, _TOP_KEYS, "")
        for section in ("timescale", "params"):
            if section not in data:
                raise ConfigError("missing section", field=section)
        sections = {
            name: _check_keys(data.get(name, {}), allowed, name)
            for name, allowed in _SECTION_KEYS.items()
        }

        timescale = cls._build("timescale", TimeScaleSpec.from_dict, sections["timescale"])
        params = cls._build(
            "params",
            lambda d: PendulumParams.from_dict(d, timescale.period),
            sections["params"],
        )
        if not math.isclose(params.T, timescale.period, rel_tol=1e-12):
            raise ConfigError(
                f"params.T={params.T} differs from the time scale period {timescale.period}",
                field="params.T",
            )

        seed = data.get("seed")
        if seed is not None and (isinstance(seed, bool) or not isinstance(seed, int)):
            raise ConfigError(f"seed must be an integer, got {seed!r}", field="seed")

        return cls(
            timescale=timescale,
            params=params,
            forcing=cls._build("forcing", ForcingSpec.from_dict, sections["forcing"]),
            solver=cls._build("solver", SolverConfig.from_dict, sections["solver"]),
            seed=seed,
            config_path=config_path,
        )

    @staticmethod
    def _build(section: str, factory: Callable[[dict], _T], data: dict) -> _T:
        try:
            return factory(data)
        except KeyError as e:
            raise ConfigError("missing key", field=f"{section}.{e.args[0]}") from e
        except (TypeError, ValueError) as e:
            raise ConfigError(str(e), field=section) from e

    def to_dict(self) -> dict:
        """Convert to dictionary."""
        data = {
            "timescale": self.timescale.to_dict(),
            "params": self.params.to_dict(),
            "forcing": self.forcing.to_dict(),
            "solver": self.solver.to_dict(),
        }
        if self.seed is not None:
            data["seed"] = self.seed
        return data

    def save(self, path: Path | None = None) -> Path:
        """Save configuration to file.

        Args:
            path: Target file; defaults to the file it was loaded from.
        """
        target = Path(path) if path is not None else self.config_path
        if target is None:
            raise ValueError("no path to save the configuration to")
        target.parent.mkdir(parents=True, exist_ok=True)
        with open(target, "w", encoding="utf-8") as f:
            json.dump(self.to_dict(), f, indent=2)
        return target
