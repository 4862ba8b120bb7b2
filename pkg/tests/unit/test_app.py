"""Tests for the command-line application."""

import json
import math
from pathlib import Path

import numpy as np
import pandas as pd
import pytest

from ts_pendulum.app import (
    EXIT_FAILS,
    EXIT_INAPPLICABLE,
    EXIT_NOT_CONVERGED,
    EXIT_OK,
    EXIT_USAGE,
    PendulumApp,
)


@pytest.fixture
def app() -> PendulumApp:
    """Fresh application."""
    return PendulumApp()


@pytest.fixture
def config_path(tmp_path: Path) -> Path:
    """Small forced problem on 20 nodes."""
    data = {
        "timescale": {"period": 1.0, "resolution": 20},
        "params": {"a": 1.0, "b": 1.0, "c": 1.0},
        "forcing": {"series": [[1, 0.0, 0.3]], "s": 0.0},
    }
    path = tmp_path / "run.json"
    path.write_text(json.dumps(data), encoding="utf-8")
    return path


def write_config(tmp_path: Path, name: str, **sections) -> Path:
    """Variant of the small problem with replaced sections."""
    data = {
        "timescale": {"period": 1.0, "resolution": 20},
        "params": {"a": 1.0, "b": 1.0, "c": 1.0},
        "forcing": {"series": [[1, 0.0, 0.3]], "s": 0.0},
        **sections,
    }
    path = tmp_path / name
    path.write_text(json.dumps(data), encoding="utf-8")
    return path


class TestUsage:
    """Tests for argument and configuration errors."""

    def test_no_command(self, app: PendulumApp) -> None:
        """Test a missing subcommand is a usage error."""
        assert app.run([]) == EXIT_USAGE

    def test_missing_config(self, app: PendulumApp, tmp_path: Path) -> None:
        """Test a nonexistent config file is a usage error."""
        assert app.run(["interval", "--config", str(tmp_path / "none.json")]) == EXIT_USAGE

    def test_unknown_key(self, app: PendulumApp, tmp_path: Path) -> None:
        """Test an unknown config key is a usage error."""
        path = write_config(tmp_path, "bad.json", solver={"damping": 0.5})
        assert app.run(["solve", "--config", str(path)]) == EXIT_USAGE

    def test_bad_jobs(self, app: PendulumApp, config_path: Path) -> None:
        """Test a nonpositive worker count is a usage error."""
        assert app.run(["interval", "--config", str(config_path), "--jobs", "0"]) == EXIT_USAGE

    def test_sobolev_on_lattice(self, app: PendulumApp, tmp_path: Path) -> None:
        """Test an unavailable k method is a usage error."""
        path = write_config(
            tmp_path,
            "lattice.json",
            timescale={"period": 1.0, "kind": "uniform_discrete", "resolution": 8},
        )
        args = ["kconst", "--config", str(path), "--method", "sobolev_continuous"]
        assert app.run(args) == EXIT_USAGE


class TestTStarCommand:
    """Tests for the tstar command."""

    def test_continuous(self, app: PendulumApp, tmp_path: Path, capsys) -> None:
        """Test the default rule prints cT* ~ 6.318 and writes tables."""
        assert app.run(["tstar", "--emit", str(tmp_path)]) == EXIT_OK

        assert "cT*=6.318" in capsys.readouterr().out
        table = pd.read_csv(tmp_path / "tstar.csv")
        assert table["cT_star"][0] == pytest.approx(6.318, abs=1e-3)
        assert (tmp_path / "psi_curve.csv").exists()

    def test_universal(self, app: PendulumApp, capsys) -> None:
        """Test the universal rule prints cT* ~ 4.19."""
        assert app.run(["tstar", "--k-rule", "universal"]) == EXIT_OK
        assert "cT*=4.19" in capsys.readouterr().out


class TestBoundsCommand:
    """Tests for the bounds command."""

    def test_simple_criterion(self, app: PendulumApp, config_path: Path, tmp_path: Path) -> None:
        """Test ck = 1/2 holds and writes the report and psi curve."""
        emit = tmp_path / "out"
        assert app.run(["bounds", "--config", str(config_path), "--emit", str(emit)]) == EXIT_OK

        report = json.loads((emit / "bounds.json").read_text(encoding="utf-8"))
        assert report["condition_holds"] is True
        assert report["criterion"] == "simple"
        assert report["k"] == {"method": "universal", "value": 0.5}
        assert (emit / "psi_curve.csv").exists()

    def test_psi_criterion(self, app: PendulumApp, tmp_path: Path) -> None:
        """Test cT = 6 on the real line holds by the psi criterion."""
        path = write_config(tmp_path, "six.json", params={"a": 1.0, "b": 1.0, "c": 6.0})
        emit = tmp_path / "out"
        args = ["bounds", "--config", str(path), "--k-method", "sobolev_continuous"]
        assert app.run([*args, "--emit", str(emit)]) == EXIT_OK

        report = json.loads((emit / "bounds.json").read_text(encoding="utf-8"))
        assert report["criterion"] == "psi"
        assert report["psi_max"] > 0

    def test_inapplicable(self, app: PendulumApp, tmp_path: Path) -> None:
        """Test ck >= pi exits with the inapplicable status."""
        path = write_config(tmp_path, "fast.json", params={"a": 1.0, "b": 1.0, "c": 7.0})
        assert app.run(["bounds", "--config", str(path)]) == EXIT_INAPPLICABLE

    def test_condition_fails(self, app: PendulumApp, tmp_path: Path) -> None:
        """Test cT = 7 on the real line fails the psi criterion."""
        path = write_config(tmp_path, "long.json", params={"a": 1.0, "b": 1.0, "c": 7.0})
        args = ["bounds", "--config", str(path), "--k-method", "sobolev_continuous"]
        assert app.run(args) == EXIT_FAILS


class TestIntervalCommand:
    """Tests for the interval command."""

    def test_writes_sweep(self, app: PendulumApp, config_path: Path, tmp_path: Path) -> None:
        """Test the sweep table and summary are written."""
        emit = tmp_path / "out"
        args = ["interval", "--config", str(config_path), "--r-samples", "8", "--emit", str(emit)]
        assert app.run(args) == EXIT_OK

        sweep = pd.read_csv(emit / "sweep.csv")
        assert list(sweep.columns) == ["r", "s_of_x", "residual", "converged"]
        assert len(sweep) == 8
        summary = json.loads((emit / "interval.json").read_text(encoding="utf-8"))
        assert summary["d_hat"] < 0 < summary["D_hat"]

    def test_reproducible(self, app: PendulumApp, config_path: Path, tmp_path: Path) -> None:
        """Test two runs write byte-identical tables."""
        for name in ("a", "b"):
            args = [
                "interval", "--config", str(config_path), "--r-samples", "8",
                "--emit", str(tmp_path / name), "--jobs", "2",
            ]
            assert app.run(args) == EXIT_OK

        assert (tmp_path / "a" / "sweep.csv").read_bytes() == (
            tmp_path / "b" / "sweep.csv"
        ).read_bytes()


class TestSolveAndVerify:
    """Tests for solve, verify and multiplicity."""

    def test_solve_then_verify(self, app: PendulumApp, config_path: Path, tmp_path: Path) -> None:
        """Test a written solution passes verification."""
        emit = tmp_path / "out"
        args = ["solve", "--config", str(config_path), "--s", "0.2", "--emit", str(emit)]
        assert app.run(args) == EXIT_OK

        report = json.loads((emit / "solve.json").read_text(encoding="utf-8"))
        assert report["residual_norm"] <= 1e-8
        assert report["max_slope"] < 1.0

        header = (emit / "solution.csv").read_text(encoding="utf-8").splitlines()[0]
        assert header == "t,x,xdelta,residual"
        table = pd.read_csv(emit / "solution.csv")
        assert len(table) == 20
        assert table["residual"].abs().max() <= 1e-8

        args = [
            "verify", "--config", str(config_path), "--s", "0.2",
            "--solution", str(emit / "solution.csv"), "--emit", str(emit),
        ]
        assert app.run(args) == EXIT_OK
        verify = json.loads((emit / "verify.json").read_text(encoding="utf-8"))
        assert verify["is_valid"] is True
        assert verify["residual_norm"] <= verify["tolerance"]

    def test_verify_bounds(self, app: PendulumApp, config_path: Path, tmp_path: Path) -> None:
        """Test pi/2 is a lower and not an upper solution for s = 0."""
        grid_t = np.arange(20) / 20
        path = tmp_path / "half_pi.csv"
        pd.DataFrame({"t": grid_t, "value": np.full(20, math.pi / 2)}).to_csv(path, index=False)

        base = ["verify", "--config", str(config_path), "--solution", str(path)]
        assert app.run([*base, "--role", "lower"]) == EXIT_OK
        assert app.run([*base, "--role", "upper"]) == EXIT_FAILS

    def test_verify_missing_file(self, app: PendulumApp, config_path: Path, tmp_path: Path) -> None:
        """Test an unreadable candidate is a usage error."""
        args = ["verify", "--config", str(config_path), "--solution", str(tmp_path / "x.csv")]
        assert app.run(args) == EXIT_USAGE

    def test_not_converged(self, app: PendulumApp, tmp_path: Path) -> None:
        """Test an offset beyond b exits with the not-converged status."""
        path = write_config(tmp_path, "capped.json", solver={"max_iterations": 5})
        emit = tmp_path / "out"
        args = ["solve", "--config", str(path), "--s", "2.0", "--emit", str(emit)]
        assert app.run(args) == EXIT_NOT_CONVERGED

        best = pd.read_csv(emit / "solution.csv")
        assert list(best.columns) == ["t", "x", "xdelta", "residual"]

    def test_kconst(self, app: PendulumApp, config_path: Path, capsys) -> None:
        """Test the universal constant is printed."""
        assert app.run(["kconst", "--config", str(config_path)]) == EXIT_OK
        assert "k=0.5" in capsys.readouterr().out

    def test_multiplicity(self, app: PendulumApp, config_path: Path, tmp_path: Path) -> None:
        """Test two distinct solutions are written for s = 0."""
        emit = tmp_path / "out"
        args = [
            "multiplicity", "--config", str(config_path), "--s", "0.0",
            "--r-samples", "8", "--emit", str(emit),
        ]
        assert app.run(args) == EXIT_OK

        report = json.loads((emit / "multiplicity.json").read_text(encoding="utf-8"))
        assert report["distinct_count"] >= 2
        assert report["converged"] <= report["seed_count"]
        assert (emit / "solution_0.csv").exists()
        assert list(pd.read_csv(emit / "solution_1.csv").columns) == [
            "t", "x", "xdelta", "residual",
        ]

    def test_multiplicity_seed_is_reproducible(
        self, app: PendulumApp, tmp_path: Path
    ) -> None:
        """Test a seeded config writes byte-identical solutions on two runs."""
        path = write_config(tmp_path, "seeded.json", seed=5)
        for name in ("a", "b"):
            args = [
                "multiplicity", "--config", str(path), "--s", "0.0",
                "--r-samples", "8", "--emit", str(tmp_path / name),
            ]
            assert app.run(args) == EXIT_OK

        report = json.loads((tmp_path / "a" / "multiplicity.json").read_text(encoding="utf-8"))
        assert report["seed_count"] >= 8
        assert (tmp_path / "a" / "solution_0.csv").read_bytes() == (
            tmp_path / "b" / "solution_0.csv"
        ).read_bytes()
