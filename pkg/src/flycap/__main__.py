import argparse
import importlib
import sys
from pathlib import Path
from typing import Any, Dict, List, Optional, Sequence, Type

from flycap import __version__
from flycap.base import BaseStudyConfig, Command, Scale
from flycap.errors import FlycapError, InvalidParams
from flycap.exporter import FileExporterConfig
from flycap.formatter import RunFormatterConfig
from flycap.integrator import IntegratorConfig
from flycap.model import PARAM_KEYS, CircuitParams, Source, load_params_file
from flycap.registry import IConfig
from flycap.runner import Runner, RunnerConfig
from flycap.utils import get_logger

STUDY_CONFIG_CLS: Dict[Command, str] = {
    Command.ANALYZE: "flycap.study.AnalyzeStudyConfig",
    Command.SIMULATE: "flycap.study.SimulateStudyConfig",
    Command.SWEEP: "flycap.study.SweepStudyConfig",
    Command.PROFILES: "flycap.study.ProfilesStudyConfig",
}
LOG_LEVELS = ("DEBUG", "INFO", "WARNING", "ERROR")


def import_and_load_config_cls(path: str) -> Type[IConfig]:
    module_path, cls_name = path.rsplit(".", 1)
    module = importlib.import_module(module_path)
    assert hasattr(
        module, cls_name
    ), f"Config class {cls_name} not found in module {module_path}"
    return getattr(module, cls_name)


def parse_t_list(text: str) -> List[float]:
    try:
        return [float(item) for item in text.split(",") if item.strip()]
    except ValueError as exc:
        raise InvalidParams(f"Cannot parse --t-list {text!r}: {exc}") from exc


def collect_params(
    args: argparse.Namespace, fallback_T: Optional[float] = None
) -> CircuitParams:
    """Merge the --params file with flag overrides."""
    values: Dict[str, Any] = {}
    if args.params is not None:
        values.update(load_params_file(args.params))
    for key in PARAM_KEYS:
        flag = getattr(args, key)
        if flag is not None:
            values[key] = flag
    if "T" not in values and fallback_T is not None:
        values["T"] = fallback_T
    return CircuitParams.from_mapping(values)


def build_study_config(args: argparse.Namespace) -> BaseStudyConfig:
    command = Command(args.command)
    config_cls = import_and_load_config_cls(STUDY_CONFIG_CLS[command])

    if command == Command.ANALYZE:
        return config_cls(params=collect_params(args))

    if command == Command.SIMULATE:
        x_init = None
        if args.i0 is not None or args.v0 is not None:
            x_init = (args.i0 or 0.0, args.v0 or 0.0)
        return config_cls(
            params=collect_params(args),
            n_periods=args.periods,
            source=Source(args.source),
            x_init=x_init,
            samples=args.samples,
            integrator=IntegratorConfig(abs_tol=args.abs_tol, rel_tol=args.rel_tol),
        )

    if command == Command.SWEEP:
        # the swept period replaces T, which then only has to satisfy validation
        return config_cls(
            params=collect_params(args, fallback_T=args.t_from),
            t_from=args.t_from,
            t_to=args.t_to,
            steps=args.steps,
            scale=Scale(args.scale),
        )

    t_list = tuple(parse_t_list(args.t_list))
    if not t_list:
        raise InvalidParams("--t-list must name at least one period")
    return config_cls(
        params=collect_params(args, fallback_T=t_list[0]),
        t_list=t_list,
        samples=args.samples,
    )


def build_runner_config(args: argparse.Namespace) -> RunnerConfig:
    return RunnerConfig(
        study_config=build_study_config(args),
        formatter_config=RunFormatterConfig(deterministic=args.deterministic),
        exporter_config=FileExporterConfig(output=args.output, gnuplot=args.gnuplot),
    )


def common_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(add_help=False)
    circuit = parser.add_argument_group("circuit parameters (SI units)")
    for key in PARAM_KEYS:
        circuit.add_argument(f"--{key}", dest=key, type=float, default=None)
    parser.add_argument(
        "--params",
        type=Path,
        default=None,
        help="TOML file with R, L, C, Vdc, T. "
        "Clone `src/flycap/params.sample.toml`. Flags override its values.",
    )
    parser.add_argument(
        "--output", default=None, help="Output path; reports default to stdout."
    )
    parser.add_argument(
        "--deterministic",
        action="store_true",
        help="Omit the timestamp so repeated runs are byte-identical.",
    )
    parser.add_argument("--log-level", choices=LOG_LEVELS, default=None)
    parser.add_argument(
        "--gnuplot", action="store_true", help="Also write <output>.gp."
    )
    return parser


def add_samples_argument(parser: argparse.ArgumentParser) -> None:
    parser.add_argument(
        "--samples", type=int, default=512, help="Samples per period (default 512)."
    )


def parse_input_args(argv: Optional[Sequence[str]] = None) -> argparse.Namespace:
    readme = """
    fcc: periodic steady state, stability and averages of the three-level
    flying capacitor converter, cross-checked against an RK45 integrator.
    See the README file for more information.
    """
    parser = argparse.ArgumentParser(prog="fcc", description=readme)
    parser.add_argument("--version", action="version", version=__version__)
    commands = parser.add_subparsers(dest="command", required=True)
    common = common_parser()

    commands.add_parser(
        Command.ANALYZE.value,
        parents=[common],
        help="Stability, steady state, averages and energy residuals as JSON.",
    )

    simulate = commands.add_parser(
        Command.SIMULATE.value, parents=[common], help="Trajectory CSV."
    )
    simulate.add_argument("--periods", type=int, default=1)
    simulate.add_argument(
        "--source", choices=[s.value for s in Source], default=Source.CLOSED_FORM.value
    )
    simulate.add_argument("--i0", type=float, default=None)
    simulate.add_argument("--v0", type=float, default=None)
    simulate.add_argument("--abs-tol", type=float, default=IntegratorConfig.abs_tol)
    simulate.add_argument("--rel-tol", type=float, default=IntegratorConfig.rel_tol)
    add_samples_argument(simulate)

    sweep = commands.add_parser(
        Command.SWEEP.value, parents=[common], help="Average current versus T CSV."
    )
    sweep.add_argument("--t-from", type=float, required=True)
    sweep.add_argument("--t-to", type=float, required=True)
    sweep.add_argument("--steps", type=int, required=True)
    sweep.add_argument(
        "--scale", choices=[s.value for s in Scale], default=Scale.LINEAR.value
    )

    profiles = commands.add_parser(
        Command.PROFILES.value,
        parents=[common],
        help="Steady profiles over two normalized periods CSV.",
    )
    profiles.add_argument(
        "--t-list", required=True, help="Comma-separated periods in seconds."
    )
    add_samples_argument(profiles)
    return parser.parse_args(argv)


def main(argv: Optional[Sequence[str]] = None) -> None:
    args = parse_input_args(argv)
    logger = get_logger(__package__, level=args.log_level)
    try:
        runner_config = build_runner_config(args)
        logger.info(f"Runner config = {runner_config}")
        runner = Runner(config=runner_config)
        runner.run()
    except FlycapError as exc:
        logger.error(f"{type(exc).__qualname__}: {exc}")
        print(f"error: {exc}", file=sys.stderr)
        raise SystemExit(exc.exit_code)


if __name__ == "__main__":
    main()
