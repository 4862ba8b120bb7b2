"""Command-line orchestrator for ts-pendulum."""

import argparse
import logging
import math
from collections.abc import Sequence
from pathlib import Path

import pandas as pd

from ts_pendulum import __version__
from ts_pendulum.config import RunConfig
from ts_pendulum.data.result_store import ResultStore
from ts_pendulum.errors import (
    AllDivergedError,
    ConfigError,
    MethodUnavailableError,
    NotConvergedError,
    PendulumError,
    SpeedLimitError,
)
from ts_pendulum.services.bounds import (
    K_RATIO,
    KMethod,
    check_zero_in_interval,
    k_constant,
    psi_curve,
    t_star,
)
from ts_pendulum.services.provider import ServiceProvider
from ts_pendulum.services.relativistic import (
    BoundRole,
    check_lower_upper,
    pendulum_residual,
    s_functional,
)
from ts_pendulum.services.solver import solve_periodic
from ts_pendulum.services.timescale import GridFunction

logger = logging.getLogger(__name__)

EXIT_OK = 0
EXIT_FAILS = 1  # computation finished, condition does not hold
EXIT_USAGE = 2
EXIT_NOT_CONVERGED = 3
EXIT_INAPPLICABLE = 4


def _fmt(value: float | None) -> str:
    """Human summary number, 6 significant digits."""
    return "n/a" if value is None else f"{value:.6g}"


class PendulumApp:
    """Parses arguments, runs one command and maps the outcome to an exit status."""

    def __init__(self) -> None:
        """Initialize the application."""
        self.parser = self._build_parser()

    @staticmethod
    def _build_parser() -> argparse.ArgumentParser:
        parser = argparse.ArgumentParser(
            prog="ts-pendulum",
            description="Periodic solutions of the forced relativistic pendulum on time scales.",
        )
        parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
        parser.add_argument(
            "-v", "--verbose", action="count", default=0, help="-v for info, -vv for debug"
        )

        common = argparse.ArgumentParser(add_help=False)
        common.add_argument("--emit", type=Path, help="directory for CSV and JSON artifacts")
        common.add_argument("--jobs", type=int, default=1, help="worker threads for sweeps")

        configured = argparse.ArgumentParser(add_help=False, parents=[common])
        configured.add_argument("--config", type=Path, required=True, help="JSON run config")
        configured.add_argument("--tol", type=float, help="residual certification tolerance")

        commands = parser.add_subparsers(dest="command", required=True)

        bounds = commands.add_parser(
            "bounds", parents=[configured], help="check the sufficient condition for 0 in I(p0)"
        )
        bounds.add_argument(
            "--k-method", choices=[m.value for m in KMethod], default=KMethod.UNIVERSAL.value
        )
        bounds.add_argument("--samples", type=int, default=200, help="psi-curve samples")

        tstar = commands.add_parser("tstar", parents=[common], help="critical period T*")
        tstar.add_argument(
            "--k-rule",
            choices=[KMethod.UNIVERSAL.value, KMethod.SOBOLEV_CONTINUOUS.value],
            default=KMethod.SOBOLEV_CONTINUOUS.value,
        )
        tstar.add_argument("--c", type=float, default=1.0, help="speed bound")
        tstar.add_argument("--tol", type=float, default=1e-6, help="tolerance on T*")
        tstar.add_argument("--samples", type=int, default=200, help="psi-curve samples at T*")

        interval = commands.add_parser(
            "interval", parents=[configured], help="estimate the solvability interval"
        )
        interval.add_argument("--r-samples", type=int, default=64)

        solve = commands.add_parser("solve", parents=[configured], help="solve for a fixed s")
        solve.add_argument("--s", type=float, help="offset (default: forcing.s of the config)")
        solve.add_argument(
            "--seed-choice",
            choices=["principal", "reflected", "constant"],
            default="principal",
            help="constant seed arcsin(s/b), pi - arcsin(s/b) or --seed-value",
        )
        solve.add_argument("--seed-value", type=float, default=0.0)

        verify = commands.add_parser(
            "verify", parents=[configured], help="check a solution or lower/upper candidate"
        )
        verify.add_argument(
            "--solution", type=Path, required=True, help="t,x,xdelta,residual or t,value CSV"
        )
        verify.add_argument(
            "--role", choices=["solution", "lower", "upper"], default="solution"
        )
        verify.add_argument("--s", type=float, help="offset (default: forcing.s of the config)")

        kconst = commands.add_parser("kconst", parents=[configured], help="constant k of the scale")
        kconst.add_argument(
            "--method", choices=[m.value for m in KMethod], default=KMethod.UNIVERSAL.value
        )

        multiple = commands.add_parser(
            "multiplicity", parents=[configured], help="search for distinct solutions at s"
        )
        multiple.add_argument("--s", type=float, help="offset (default: forcing.s of the config)")
        multiple.add_argument("--r-samples", type=int, default=64)
        multiple.add_argument("--margin", type=float, default=0.0)

        return parser

    def run(self, argv: Sequence[str] | None = None) -> int:
        """Run one command and return its exit status."""
        try:
            args = self.parser.parse_args(argv)
        except SystemExit as e:
            return int(e.code) if isinstance(e.code, int) else EXIT_USAGE

        level = (logging.WARNING, logging.INFO, logging.DEBUG)[min(args.verbose, 2)]
        logging.basicConfig(level=level, format="%(levelname)s %(name)s: %(message)s")

        handler = getattr(self, f"_cmd_{args.command}")
        try:
            return handler(args)
        except ConfigError as e:
            logger.error("configuration error: %s", e)
            return EXIT_USAGE
        except MethodUnavailableError as e:
            logger.error("%s", e)
            return EXIT_USAGE
        except (NotConvergedError, AllDivergedError) as e:
            logger.error("solver did not converge: %s", e)
            return EXIT_NOT_CONVERGED
        except PendulumError as e:
            logger.error("%s", e)
            return EXIT_FAILS
        except ValueError as e:
            logger.error("invalid argument: %s", e)
            return EXIT_USAGE

    def _provider(self, args: argparse.Namespace) -> ServiceProvider:
        if args.jobs < 1:
            raise ConfigError(f"--jobs must be positive, got {args.jobs}", field="jobs")
        config = RunConfig.load(args.config)
        return ServiceProvider.create(config, args.emit, jobs=args.jobs, residual_tol=args.tol)

    def _cmd_bounds(self, args: argparse.Namespace) -> int:
        provider = self._provider(args)
        k = k_constant(provider.grid, args.k_method)
        report = check_zero_in_interval(provider.params, k)

        print(
            f"k={_fmt(k.value)} ({k.method.value})  ck={_fmt(report.ck)}  cT={_fmt(report.cT)}"
        )
        if not report.applicable:
            print("bound inapplicable: c*k >= pi")
            provider.store.write_report("bounds", {**report.to_dict(), "k": k.to_dict()})
            return EXIT_INAPPLICABLE

        print(
            f"delta*={_fmt(report.delta_star)}  psi_max={_fmt(report.psi_max)}  "
            f"holds={report.condition_holds}  strict={report.strict}  ({report.criterion})"
        )
        provider.store.write_report("bounds", {**report.to_dict(), "k": k.to_dict()})
        provider.store.write_table("psi_curve", psi_curve(report.cT, report.ck, args.samples))
        return EXIT_OK if report.condition_holds else EXIT_FAILS

    def _cmd_tstar(self, args: argparse.Namespace) -> int:
        store = ResultStore(args.emit)
        T = t_star(args.k_rule, args.c, args.tol)
        cT = args.c * T
        print(f"T*={T:.8g}  cT*={cT:.8g}  ({args.k_rule})")

        table = pd.DataFrame(
            {"k_rule": [args.k_rule], "c": [args.c], "T_star": [T], "cT_star": [cT]}
        )
        store.write_table("tstar", table)
        ck = cT * K_RATIO[KMethod(args.k_rule)]
        store.write_table("psi_curve", psi_curve(cT, ck, args.samples))
        return EXIT_OK

    def _cmd_interval(self, args: argparse.Namespace) -> int:
        provider = self._provider(args)
        try:
            estimate = provider.analyzer.sweep_interval(provider.forcing.p0, args.r_samples)
        except AllDivergedError as e:
            if e.table is not None:
                provider.store.write_table("sweep", e.table)
            raise

        summary = estimate.summary()
        print(
            f"I(p0) contains [{_fmt(estimate.d_hat)}, {_fmt(estimate.D_hat)}]  "
            f"(b={_fmt(estimate.b)}, {summary['converged_rows']}/{estimate.r_samples} rows)"
        )
        provider.store.write_table("sweep", estimate.to_frame())
        provider.store.write_report("interval", summary)
        return EXIT_OK

    def _offset(self, args: argparse.Namespace, provider: ServiceProvider) -> float:
        return provider.forcing.s if args.s is None else args.s

    def _cmd_solve(self, args: argparse.Namespace) -> int:
        provider = self._provider(args)
        params = provider.params
        s = self._offset(args, provider)

        principal = math.asin(max(-1.0, min(1.0, s / params.b)))
        seed_value = {
            "principal": principal,
            "reflected": math.pi - principal,
            "constant": args.seed_value,
        }[args.seed_choice]
        seed = GridFunction.constant(provider.grid, seed_value)

        try:
            solution = solve_periodic(s, params, provider.forcing.p0, seed, provider.solver)
        except NotConvergedError as e:
            if e.solution is not None:
                provider.store.write_solution("solution", e.solution)
            raise

        report = {
            "s": s,
            "s_of_x": solution.s_of_x,
            "residual_norm": solution.residual_norm,
            "iterations": solution.iterations,
            "strategy": solution.strategy,
            "max_slope": solution.xdelta.sup_norm(),
            "grid_step": provider.grid.grid_step,
        }
        print(
            f"s={_fmt(s)}  residual={solution.residual_norm:.3e}  "
            f"iterations={solution.iterations}  max|x'|={_fmt(report['max_slope'])}"
        )
        provider.store.write_solution("solution", solution)
        provider.store.write_report("solve", report)
        return EXIT_OK

    def _cmd_verify(self, args: argparse.Namespace) -> int:
        provider = self._provider(args)
        params = provider.params
        forcing = provider.forcing.with_offset(self._offset(args, provider))
        try:
            candidate = ResultStore.read_solution(args.solution, provider.grid)
        except (OSError, ValueError) as e:
            raise ConfigError(f"cannot read {args.solution}: {e}", field="solution") from e

        try:
            if args.role == "solution":
                residual = pendulum_residual(candidate, params, forcing).sup_norm()
                tol = provider.solver.tolerance_for(params)
                report = {
                    "role": "solution",
                    "residual_norm": residual,
                    "tolerance": tol,
                    "s_of_x": s_functional(candidate, params.b),
                    "is_valid": residual <= tol,
                }
            else:
                result = check_lower_upper(candidate, BoundRole(args.role), params, forcing)
                report = {
                    "role": result.role.value,
                    "margin": result.margin,
                    "is_valid": result.is_valid,
                    "is_strict": result.is_strict,
                }
        except SpeedLimitError as e:
            report = {"role": args.role, "is_valid": False, "speed": e.speed, "c": e.c}

        print("  ".join(f"{key}={value}" for key, value in report.items()))
        provider.store.write_report("verify", report)
        return EXIT_OK if report["is_valid"] else EXIT_FAILS

    def _cmd_kconst(self, args: argparse.Namespace) -> int:
        provider = self._provider(args)
        k = k_constant(provider.grid, args.method)
        print(f"k={_fmt(k.value)}  T/k={_fmt(provider.grid.period / k.value)}  ({k.method.value})")
        provider.store.write_report("kconst", k.to_dict())
        return EXIT_OK

    def _cmd_multiplicity(self, args: argparse.Namespace) -> int:
        provider = self._provider(args)
        s = self._offset(args, provider)
        estimate = provider.analyzer.sweep_interval(provider.forcing.p0, args.r_samples)
        if not estimate.contains(s, args.margin):
            raise ConfigError(
                f"s={_fmt(s)} is not inside [{_fmt(estimate.d_hat)}, {_fmt(estimate.D_hat)}] "
                f"by margin {_fmt(args.margin)}",
                field="s",
            )
        report = provider.analyzer.find_multiple_solutions(
            provider.forcing.p0, s, estimate=estimate, margin=args.margin
        )
        print(
            f"s={_fmt(s)}  distinct={report.distinct_count}  "
            f"separation={_fmt(report.separation if report.distinct_count > 1 else None)}"
        )
        for index, members in enumerate(report.classes):
            provider.store.write_solution(f"solution_{index}", report.solutions[members[0]])
        provider.store.write_report(
            "multiplicity",
            {
                "s": s,
                "distinct_count": report.distinct_count,
                "converged": len(report.solutions),
                "seed_count": report.seed_count,
            },
        )
        return EXIT_OK if report.distinct_count >= 2 else EXIT_FAILS
