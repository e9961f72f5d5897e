"""
Trivortex - Main Application

Command-line front end for the parabolic three-vortex simulator:

    python -m app.main simulate --k1 2 --k2 1 --R 0.18195,0.44396,0.37409 --out rminus.csv
    python -m app.main curve --k1 2 --k2 1
    python -m app.main points --k1 2 --k2 1
    python -m app.main portrait --k1 2 --k2 1
    python -m app.main table1
    python -m app.main verify
"""

import argparse
import asyncio
import contextlib
import logging
import sys
from typing import IO, Iterator, List, Optional, Sequence

import structlog
from pydantic import ValidationError

from app import __version__
from app.config import get_settings
from app.errors import VortexError
from app.models import CheckStatus, InitialSpec, IntegratorSettings, Termination, TrajectoryType
from app.services import (
    CoreService,
    ExperimentService,
    ExportService,
    GeometryService,
    InitialConditionService,
)

settings = get_settings()
logger = structlog.get_logger(__name__)

EXIT_OK = 0
EXIT_UNCONVERGED = 2
EXIT_COLLISION = 3
EXIT_USAGE = 64
EXIT_DATA = 65

SUM_TOL = 1e-12


def configure_logging(level: str) -> None:
    """Route structlog through stdlib logging on stderr"""
    logging.basicConfig(level=getattr(logging, level.upper(), logging.INFO), format="%(message)s", stream=sys.stderr)
    structlog.configure(
        processors=[
            structlog.stdlib.filter_by_level,
            structlog.stdlib.add_logger_name,
            structlog.stdlib.add_log_level,
            structlog.processors.TimeStamper(fmt="iso"),
            structlog.processors.format_exc_info,
            structlog.processors.KeyValueRenderer(key_order=["timestamp", "level", "logger", "event"]),
        ],
        logger_factory=structlog.stdlib.LoggerFactory(),
        wrapper_class=structlog.stdlib.BoundLogger,
        cache_logger_on_first_use=True,
    )


class CliParser(argparse.ArgumentParser):
    """Argument parser exiting with the usage code"""

    def error(self, message: str):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


@contextlib.contextmanager
def open_output(path: Optional[str]) -> Iterator[IO[str]]:
    if path is None or path == "-":
        yield sys.stdout
        return
    with open(path, "w", newline="") as handle:
        yield handle


def _triple(text: str) -> List[float]:
    try:
        values = [float(part) for part in text.split(",")]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected three comma-separated numbers, got {text!r}")
    if len(values) != 3:
        raise argparse.ArgumentTypeError(f"expected three comma-separated numbers, got {text!r}")
    return values


def _add_strengths(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--k1", type=float, default=2.0, help="strength of vortex 1 (default: 2)")
    parser.add_argument("--k2", type=float, default=1.0, help="strength of vortex 2 (default: 1)")


def _add_integrator(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--t-max", type=float, default=None, help="integration horizon")
    parser.add_argument("--rel-tol", type=float, default=None, help="relative tolerance")
    parser.add_argument("--abs-tol", type=float, default=None, help="absolute tolerance")
    parser.add_argument("--max-step", type=float, default=None, help="largest step size")
    parser.add_argument("--tol-conv", type=float, default=None, help="convergence tolerance on |calY|")


def build_parser() -> argparse.ArgumentParser:
    parser = CliParser(prog="trivortex", description="Parabolic three-point-vortex simulator")
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    parser.add_argument("--log-level", default=None, help=f"logging level (default: {settings.log_level})")
    commands = parser.add_subparsers(dest="command", required=True, parser_class=CliParser)

    simulate = commands.add_parser("simulate", help="integrate one start configuration")
    _add_strengths(simulate)
    start = simulate.add_mutually_exclusive_group(required=True)
    start.add_argument("--R", type=_triple, help="side lengths R1,R2,R3 (normalised to unit perimeter)")
    start.add_argument("--ibar", type=float, help="Ibar level of an offset start (needs --caly)")
    start.add_argument("--on-curve-x1", type=float, help="start on the critical curve at this x1")
    simulate.add_argument("--caly", type=float, default=None, help="calY offset for --ibar starts")
    simulate.add_argument("--gamma", type=int, choices=(-1, 1), default=1, help="orientation (default: +1)")
    _add_integrator(simulate)
    simulate.add_argument("--samples", type=int, default=None, help="resample the CSV on a uniform time grid")
    simulate.add_argument("--out", default=None, help="trajectory CSV path, '-' for stdout")
    simulate.add_argument("--summary", default="-", help="summary JSON path (default: stdout)")
    simulate.add_argument("--run-id", default=None, help="identifier reported in the summary")

    curve = commands.add_parser("curve", help="sample the critical curve")
    _add_strengths(curve)
    curve.add_argument("--samples", type=int, default=settings.curve_samples, help="number of samples")
    curve.add_argument("--out", default="-", help="CSV path (default: stdout)")

    points = commands.add_parser("points", help="critical points and Ibar levels as JSON")
    _add_strengths(points)
    points.add_argument("--out", default="-", help="JSON path (default: stdout)")

    portrait = commands.add_parser("portrait", help="constant-Ibar trajectories as CSV polylines")
    _add_strengths(portrait)
    portrait.add_argument("--levels", type=lambda s: [float(v) for v in s.split(",")], default=None,
                          help="comma-separated Ibar levels (default: 1, I4, I5, I6 and interior levels)")
    portrait.add_argument("--rows", type=int, default=200, help="beta rows per level")
    portrait.add_argument("--out", default="-", help="CSV path (default: stdout)")

    table1 = commands.add_parser("table1", help="run the four reference start points")
    _add_integrator(table1)
    table1.add_argument("--out", default="-", help="CSV path (default: stdout)")

    verify = commands.add_parser("verify", help="formulation and closed-form checks")
    verify.add_argument("--out", default="-", help="JSON path (default: stdout)")
    return parser


def _integrator_from(args: argparse.Namespace) -> IntegratorSettings:
    return IntegratorSettings.from_settings(
        t_max=args.t_max, rel_tol=args.rel_tol, abs_tol=args.abs_tol, max_step=args.max_step
    )


def _initial_spec(args: argparse.Namespace, parser: argparse.ArgumentParser) -> InitialSpec:
    core = CoreService()
    strengths = core.parabolic_strengths(args.k1, args.k2)
    if args.R is not None:
        total = sum(args.R)
        R = tuple(value / total for value in args.R)
        if abs(total - 1.0) > SUM_TOL:
            logger.info("sides_normalised", perimeter=total)
        return InitialSpec(R=R, gamma=args.gamma, k=strengths)

    initial = InitialConditionService()
    if args.ibar is not None:
        if args.caly is None:
            parser.error("--ibar needs --caly")
        point = initial.point_at_offset(args.ibar, args.caly, strengths, args.gamma)
    else:
        point = GeometryService().curve_point(args.on_curve_x1, strengths, args.gamma)
    return initial.spec_from_point(point, strengths)


def cmd_simulate(args: argparse.Namespace, parser: argparse.ArgumentParser) -> int:
    if args.out == "-" and args.summary == "-":
        parser.error("--out and --summary cannot both write to stdout")
    spec = _initial_spec(args, parser)
    experiments = ExperimentService()
    export = ExportService()

    summary, record = experiments.run(spec, _integrator_from(args), args.tol_conv, args.run_id)
    if args.out is not None:
        with open_output(args.out) as stream:
            export.write_trajectory_csv(record, stream, args.samples)
    with open_output(args.summary) as stream:
        export.write_json(export.summary_payload(summary), stream)

    if record.termination == Termination.COLLISION_ABORT:
        return EXIT_COLLISION
    if summary.prediction.type == TrajectoryType.ON_CURVE or summary.report.converged:
        return EXIT_OK
    return EXIT_UNCONVERGED


def cmd_curve(args: argparse.Namespace) -> int:
    geometry = GeometryService()
    strengths = CoreService().parabolic_strengths(args.k1, args.k2)
    with open_output(args.out) as stream:
        ExportService().write_curve_csv(geometry.sample_curve(strengths, args.samples), stream)
    return EXIT_OK


def cmd_points(args: argparse.Namespace) -> int:
    strengths = CoreService().parabolic_strengths(args.k1, args.k2)
    points = GeometryService().critical_points(strengths)
    with open_output(args.out) as stream:
        ExportService().write_json(points.model_dump(mode="json"), stream)
    return EXIT_OK


def cmd_portrait(args: argparse.Namespace) -> int:
    geometry = GeometryService()
    strengths = CoreService().parabolic_strengths(args.k1, args.k2)
    levels = args.levels
    if levels is None:
        points = geometry.critical_points(strengths)
        levels = [1.0, points.I4, points.I5, points.I6, 0.6, 0.8, 1.5]
    arcs = []
    for level in levels:
        arcs.extend(geometry.level_curve(level, strengths, args.rows))
    with open_output(args.out) as stream:
        ExportService().write_level_curves_csv(arcs, stream)
    return EXIT_OK


def cmd_table1(args: argparse.Namespace) -> int:
    experiments = ExperimentService()
    rows = asyncio.run(experiments.reference_table(_integrator_from(args), args.tol_conv))
    columns = [
        "name", "calY_expected", "calY", "Ibar_expected", "Ibar",
        "predicted", "observed", "crossings", "extrema", "similarity", "status", "details",
    ]
    with open_output(args.out) as stream:
        stream.write(",".join(columns) + "\n")
        for row in rows:
            values = [
                row.name, f"{row.caly_expected:.5f}", f"{row.caly:.5f}", f"{row.ibar_expected:.5f}",
                f"{row.ibar:.5f}", row.predicted.value, row.observed.value, str(row.crossings),
                str(row.extrema), row.similarity.value if row.similarity else "", row.status.value,
                (row.details or "").replace(",", ";"),
            ]
            stream.write(",".join(values) + "\n")
    logger.info("table1_finish", stats=experiments.stats)
    return EXIT_OK if all(row.status == CheckStatus.PASSED for row in rows) else EXIT_UNCONVERGED


def cmd_verify(args: argparse.Namespace) -> int:
    checks = ExperimentService().verify()
    with open_output(args.out) as stream:
        ExportService().write_json([check.model_dump(mode="json") for check in checks], stream)
    return EXIT_OK if all(check.status != CheckStatus.FAILED for check in checks) else EXIT_UNCONVERGED


def main(argv: Optional[Sequence[str]] = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    configure_logging(args.log_level or settings.log_level)

    try:
        if args.command == "simulate":
            return cmd_simulate(args, parser)
        if args.command == "curve":
            return cmd_curve(args)
        if args.command == "points":
            return cmd_points(args)
        if args.command == "portrait":
            return cmd_portrait(args)
        if args.command == "table1":
            return cmd_table1(args)
        return cmd_verify(args)
    except (VortexError, ValidationError) as e:
        logger.error("command_failed", command=args.command, error=str(e))
        print(f"trivortex: error: {e}", file=sys.stderr)
        return e.exit_code if isinstance(e, VortexError) else EXIT_DATA


if __name__ == "__main__":
    sys.exit(main())
