"""GaitPlanner command-line interface."""

import argparse
import io
import sys
from pathlib import Path
from typing import Any, Callable, Dict, List, Optional, Sequence, TextIO

import pandas as pd

from app.config import settings
from app.core.errors import (
    AnalysisError,
    ConfigError,
    DynamicsError,
    GaitPlannerError,
    InfeasibleTerrainError,
    SeriesFormatError,
    SolverError,
    TerrainSyntaxError,
)
from app.models.run_config import OutputFormat, RunConfig, build_run_config, read_config_file
from app.models.schemas import PlanResult, SolverSettings, SpeedSeries, Strategy, TerrainProfile
from app.planners import get_planner
from app.services import analysis_service, series_service
from app.services.terrain_service import (
    get_terrain_catalog,
    load_terrain,
    reverse,
    serialize_terrain,
    transitions,
    with_padding,
)
from app.utils.logger import get_logger, set_log_level

logger = get_logger(__name__)

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_NOT_CONVERGED = 3
EXIT_INFEASIBLE = 4

SOLVED_STRATEGIES = {Strategy.REACTIVE, Strategy.MIN_ENERGY, Strategy.HORIZON}


# Argument parsing
def common_options() -> argparse.ArgumentParser:
    """Flags accepted both before and after the subcommand."""
    common = argparse.ArgumentParser(add_help=False, argument_default=argparse.SUPPRESS)
    group = common.add_argument_group("run configuration")
    group.add_argument("--config", help="Run-config file of `key = value` lines; flags override it")
    group.add_argument("--alpha", type=float, help="Inter-leg half-angle (rad)")
    group.add_argument("--speed", type=float, help="Nominal walking speed (m/s)")
    group.add_argument("--step-length", dest="step_length", type=float, help="Step length (m)")
    group.add_argument("--policy", help="Step-length policy: fixed:<m> or preferred")
    group.add_argument("--leg-length", dest="leg_length", type=float, help="Leg length (m)")
    group.add_argument("--pad", type=int, help="Level steps before and after the terrain")
    group.add_argument("--seed", type=int, help="Random seed")
    group.add_argument("--out", help="Output file (default: stdout)")
    group.add_argument("--format", choices=[f.value for f in OutputFormat], help="Output format")
    group.add_argument("--terrain", help="Built-in terrain name")
    group.add_argument("--terrain-file", dest="terrain_file", help="Terrain file path")
    group.add_argument("--strategy", help="nominal, tight, reactive, min-energy or horizon:<m>")
    group.add_argument("-v", "--verbose", action="count", help="More logging (-v info, -vv debug)")
    return common


def build_parser() -> argparse.ArgumentParser:
    common = common_options()
    parser = argparse.ArgumentParser(
        prog="gaitplanner",
        description="Push-off planning for a pendulum walker on uneven terrain",
        parents=[common],
    )
    parser.add_argument("--version", action="version", version=f"%(prog)s {settings.APP_VERSION}")
    commands = parser.add_subparsers(dest="command", required=True)

    simulate = commands.add_parser("simulate", parents=[common], help="Plan and roll out one strategy")
    simulate.add_argument("--all", dest="all_strategies", action="store_true",
                          help="Compare nominal, tight, reactive and min-energy instead")
    simulate.add_argument("--reactive-full-map", action=argparse.BooleanOptionalAction, default=None,
                          help="Reactive planner sees all terrain after the first uneven landing (default on)")
    simulate.add_argument("--tight-preview", action=argparse.BooleanOptionalAction, default=None,
                          help="Tight planner also sees the landing that ends each step, so every step takes T")
    simulate.add_argument("--no-terminal-speed", dest="terminal_speed", action="store_false", default=None,
                          help="Finite-horizon windows only regain timing")
    simulate.add_argument("--series-out", help="Also write the mid-stance speed series CSV here")
    simulate.set_defaults(handler=cmd_simulate)

    sweep = commands.add_parser("sweep-horizon", parents=[common], help="Finite-horizon work and similarity vs m")
    sweep.add_argument("--m", dest="m_values", help="Horizons, e.g. 1-21 or 2,8,14 (default: 1..N)")
    sweep.add_argument("--long-out", help="Also write normalised speeds in long format (m,i,v_norm)")
    sweep.add_argument("--workers", type=int, default=None, help="Concurrent solves")
    sweep.add_argument("--no-terminal-speed", dest="terminal_speed", action="store_false", default=None,
                       help="Windows only regain timing")
    sweep.set_defaults(handler=cmd_sweep_horizon)

    grid = commands.add_parser("sweep-params", parents=[common], help="Min-energy profiles across speeds and step lengths")
    grid.add_argument("--speeds", default=None, help="Comma-separated speeds (m/s)")
    grid.add_argument("--step-lengths", default=None, help="Comma-separated fixed step lengths (m)")
    grid.add_argument("--no-preferred", dest="include_preferred", action="store_false",
                      help="Skip the preferred step-length policy")
    grid.set_defaults(handler=cmd_sweep_params)

    compare = commands.add_parser("compare", parents=[common], help="Compare a model series with subject data")
    compare.add_argument("--model", help="Model trajectory or series CSV (default: solve live)")
    compare.add_argument("--data", help="Subject speed-series CSV")
    compare.add_argument("--synthetic", type=int, default=None, help="Generate N synthetic subjects instead of --data")
    compare.add_argument("--noise", type=float, default=0.01, help="Synthetic noise scale (model units)")
    compare.add_argument("--n-shuffles", type=int, default=None, help="Shuffled model sequences")
    compare.add_argument("--scale-floor", type=float, default=None, help="Minimum per-step scale, fraction of RMS")
    compare.set_defaults(handler=cmd_compare)

    terrains = commands.add_parser("terrains", parents=[common], help="List, show or export built-in terrains")
    terrains.add_argument("action", choices=["list", "show", "export"])
    terrains.add_argument("name", nargs="?", help="Terrain name for show/export")
    terrains.add_argument("--reverse", action="store_true", help="Reverse the terrain before show/export")
    terrains.set_defaults(handler=cmd_terrains)

    plot = commands.add_parser("plot-script", parents=[common], help="Print a gnuplot script for an output CSV")
    plot.add_argument("csv", help="Trajectory, sweep or long-format CSV written by this tool")
    plot.set_defaults(handler=cmd_plot_script)

    return parser


def run_config_from_args(args: argparse.Namespace) -> RunConfig:
    file_values = read_config_file(Path(args.config)) if getattr(args, "config", None) else {}
    flags = {key: getattr(args, key, None) for key in (
        "alpha", "speed", "step_length", "policy", "leg_length", "pad",
        "seed", "out", "format", "terrain", "terrain_file", "strategy",
    )}
    return build_run_config(file_values, **flags)


# Shared helpers
def resolve_terrain(config: RunConfig) -> TerrainProfile:
    config.require_terrain()
    if config.terrain_file is not None:
        terrain = load_terrain(Path(config.terrain_file))
        return terrain if config.pad is None else with_padding(terrain, config.pad)
    return get_terrain_catalog(pad=config.pad).get(config.terrain)


def header_for(config: RunConfig, **extra: Any) -> Dict[str, Any]:
    return series_service.provenance(config.config_hash(), **extra)


def emit(config: RunConfig, text: str, out: Optional[str] = None) -> None:
    target = out if out is not None else config.out
    if target is None:
        sys.stdout.write(text)
    else:
        Path(target).write_text(text, encoding="utf-8")


def status(config: RunConfig, line: str) -> None:
    """Summary lines go to stdout when data went to a file, else to stderr."""
    stream: TextIO = sys.stdout if config.out is not None else sys.stderr
    stream.write(line + "\n")


def summary_line(result: PlanResult) -> str:
    trajectory = result.trajectory
    return (
        f"total_work={trajectory.total_work:.10g} work_excess={result.work_excess:.10g} "
        f"total_time={trajectory.total_time:.10g} converged={str(result.converged).lower()}"
    )


def solve(config: RunConfig, terrain: TerrainProfile, **spec_options: Any) -> PlanResult:
    spec = config.plan_spec(SolverSettings.from_settings(), **{k: v for k, v in spec_options.items() if v is not None})
    return get_planner(spec, config.model_params()).run(terrain)


def _csv(frame: pd.DataFrame, header: Dict[str, Any]) -> str:
    buffer = io.StringIO()
    buffer.write(series_service.provenance_line(header))
    frame.to_csv(buffer, index=False, float_format=series_service.FLOAT_FORMAT, lineterminator="\n", na_rep="nan")
    return buffer.getvalue()


def _int_list(text: str) -> List[int]:
    values: List[int] = []
    for part in text.split(","):
        part = part.strip()
        if not part:
            continue
        start, sep, end = part.partition("-")
        try:
            if sep:
                values.extend(range(int(start), int(end) + 1))
            else:
                values.append(int(part))
        except ValueError:
            raise ConfigError(f"cannot read horizon list {text!r}") from None
    if not values or min(values) < 1:
        raise ConfigError("horizons must be positive integers")
    return values


def _float_list(text: str) -> List[float]:
    try:
        return [float(part) for part in text.split(",") if part.strip()]
    except ValueError:
        raise ConfigError(f"cannot read number list {text!r}") from None


# Commands
def cmd_simulate(args: argparse.Namespace, config: RunConfig) -> int:
    """Plan a terrain with one strategy (or all) and write the trajectory."""
    terrain = resolve_terrain(config)

    if args.all_strategies:
        summaries, _ = analysis_service.compare_strategies(config.model_params(), terrain)
        header = header_for(config, terrain=terrain.name)
        if config.format == OutputFormat.JSON:
            emit(config, series_service.dumps_json(
                {"provenance": header, "strategies": [s.model_dump(mode="json") for s in summaries]}
            ))
        else:
            frame = pd.DataFrame([s.model_dump() for s in summaries])
            emit(config, _csv(frame, header))
        return EXIT_OK

    result = solve(
        config,
        terrain,
        reactive_full_map=args.reactive_full_map,
        tight_preview=args.tight_preview,
        terminal_speed=args.terminal_speed,
    )
    header = header_for(config)
    if config.format == OutputFormat.JSON:
        emit(config, series_service.dumps_json({
            "provenance": {**header, "terrain": terrain.name},
            "summary": {
                "total_work": result.trajectory.total_work,
                "work_excess": result.work_excess,
                "total_time": result.trajectory.total_time,
                "converged": result.converged,
            },
            "result": result.model_dump(mode="json"),
        }))
    else:
        buffer = io.StringIO()
        series_service.write_trajectory_csv(result.trajectory, buffer, header)
        emit(config, buffer.getvalue())

    if args.series_out:
        series_service.write_series(
            [SpeedSeries.from_trajectory(result.trajectory, label=result.strategy)],
            args.series_out,
            header=header,
        )
    status(config, summary_line(result))

    if not result.converged and config.plan_spec().strategy in SOLVED_STRATEGIES:
        logger.warning("plan_not_converged", strategy=result.strategy, message=result.message)
        return EXIT_NOT_CONVERGED
    return EXIT_OK


def cmd_sweep_horizon(args: argparse.Namespace, config: RunConfig) -> int:
    """Sweep finite-horizon lengths against the full-horizon plan."""
    terrain = resolve_terrain(config)
    m_values = _int_list(args.m_values) if args.m_values else list(range(1, terrain.step_count + 1))
    sweep = analysis_service.horizon_sweep(
        config.model_params(),
        terrain,
        m_values,
        terminal_speed=args.terminal_speed,
        workers=args.workers,
    )
    header = header_for(config, terrain=terrain.name)

    if config.format == OutputFormat.JSON:
        emit(config, series_service.dumps_json(
            {"provenance": header, "rows": [r.model_dump() for r in sweep.rows]}
        ))
    else:
        buffer = io.StringIO()
        series_service.write_sweep_csv(sweep.rows, buffer, header)
        emit(config, buffer.getvalue())

    if args.long_out:
        profiles = {
            m: list(zip(trajectory.indices.tolist(), analysis_service.normalized(trajectory.midstance_speeds).tolist()))
            for m, trajectory in sweep.trajectories.items()
        }
        series_service.write_sweep_long(profiles, args.long_out, header)

    for row in sweep.rows:
        status(config, f"m={row.m} work_excess={row.work_excess:.6g} rho_vs_full={row.rho_vs_full:.4f}")
    return EXIT_OK


def cmd_sweep_params(args: argparse.Namespace, config: RunConfig) -> int:
    """Min-energy profiles over the speed and step-length grid."""
    terrain = resolve_terrain(config)
    options: Dict[str, Any] = {"include_preferred": args.include_preferred, "leg_length": config.leg_length}
    if args.speeds:
        options["speeds_mps"] = _float_list(args.speeds)
    if args.step_lengths:
        options["step_lengths_m"] = _float_list(args.step_lengths)
    grid = analysis_service.parameter_grid(terrain, **options)
    header = header_for(config, terrain=terrain.name)

    if config.format == OutputFormat.JSON:
        emit(config, series_service.dumps_json({"provenance": header, **grid.model_dump(mode="json")}))
    else:
        frame = pd.DataFrame(
            [
                (c.speed_mps, c.step_length_m, c.policy, str(c.feasible).lower(), str(c.converged).lower(), c.work_excess)
                for c in grid.cells
            ],
            columns=["speed_mps", "step_length_m", "policy", "feasible", "converged", "work_excess"],
        )
        emit(config, _csv(frame, header))

    status(config, f"feasible={sum(c.feasible for c in grid.cells)}/{len(grid.cells)} "
                   f"compared={len(grid.compared)} min_correlation={grid.min_correlation:.4f}")
    return EXIT_OK


def cmd_compare(args: argparse.Namespace, config: RunConfig) -> int:
    """Correlation, scaling and shuffled likelihood ratios of a model against subjects."""
    exit_code = EXIT_OK
    if args.model:
        model = series_service.read_model_series(args.model)
    else:
        terrain = resolve_terrain(config)
        result = solve(config, terrain)
        model = SpeedSeries.from_trajectory(result.trajectory, label=result.strategy)
        if not result.converged and config.plan_spec().strategy in SOLVED_STRATEGIES:
            exit_code = EXIT_NOT_CONVERGED

    if args.synthetic is not None:
        subjects = analysis_service.synthetic_subjects(model, args.synthetic, args.noise, seed=config.seed)
    elif args.data:
        subjects = series_service.read_series(args.data)
        matching = [s for s in subjects if s.terrain == model.terrain]
        if not matching:
            names = sorted({s.terrain for s in subjects})
            raise AnalysisError(f"no subject series for terrain {model.terrain!r} (data has {names})")
        subjects = matching
    else:
        raise ConfigError("compare needs --data FILE or --synthetic N")

    report = analysis_service.compare(
        model,
        subjects,
        n_shuffles=args.n_shuffles,
        seed=config.seed,
        scale_floor=args.scale_floor,
    )
    buffer = io.StringIO()
    series_service.write_report_json(report, buffer, header_for(config, terrain=model.terrain))
    emit(config, buffer.getvalue())
    status(
        config,
        f"rho={report.pearson_rho:.4f} ci95=[{report.rho_ci_low:.4f},{report.rho_ci_high:.4f}] "
        f"bits_per_step={report.bits_per_step:.4g}",
    )
    return exit_code


def cmd_terrains(args: argparse.Namespace, config: RunConfig) -> int:
    """List the catalog, or show/export one terrain."""
    catalog = get_terrain_catalog(pad=config.pad)

    if args.action == "list":
        lines = [
            series_service.provenance_line(header_for(config)).rstrip("\n"),
            f"{'name':<8} {'N':>3} {'uneven':>6}  {'geometry':<11} description",
        ]
        for entry in catalog.entries():
            p = entry.profile
            flag = "canonical" if entry.canonical else "approximate"
            lines.append(f"{p.name:<8} {p.step_count:>3} {len(p.height_multiples):>6}  {flag:<11} {entry.description}")
        emit(config, "\n".join(lines) + "\n")
        return EXIT_OK

    if not args.name:
        raise ConfigError(f"terrains {args.action} needs a terrain name")
    profile = catalog.get(args.name)
    if args.reverse:
        profile = reverse(profile)

    provenance = series_service.provenance_line(header_for(config, terrain=profile.name))
    if args.action == "export":
        emit(config, provenance + serialize_terrain(profile))
        return EXIT_OK

    step_length = config.model_params().step_length
    deltas = transitions(profile, step_length)
    lines = [provenance + serialize_terrain(profile).rstrip("\n"), f"# steps = {profile.step_count}"]
    lines += [
        f"# {p - profile.pad_before:>3} b={m:>2} delta={d:+.5f}"
        for p, (m, d) in enumerate(zip(profile.padded_multiples, deltas))
    ]
    emit(config, "\n".join(lines) + "\n")
    return EXIT_OK


PLOT_TEMPLATES: Dict[str, Callable[[str], str]] = {
    "trajectory": lambda path: (
        "set multiplot layout 3,1\n"
        f"plot '{path}' using 'i':'u' with linespoints title 'push-off'\n"
        f"plot '{path}' using 'i':'v_mid' with linespoints title 'mid-stance speed'\n"
        f"plot '{path}' using 'i':'time_gain' with linespoints title 'time gain'\n"
        "unset multiplot\n"
    ),
    "sweep": lambda path: (
        "set multiplot layout 2,1\n"
        f"plot '{path}' using 'm':'work_excess' with linespoints title 'work excess'\n"
        f"plot '{path}' using 'm':'rho_vs_full' with linespoints title 'correlation with full horizon'\n"
        "unset multiplot\n"
    ),
    "long": lambda path: (
        f"stats '{path}' using 1 nooutput\n"
        f"plot for [m=int(STATS_min):int(STATS_max)] '{path}' using 2:(column(1)==m ? column(3) : 1/0) "
        "with lines title sprintf('m=%d', m)\n"
    ),
}


def cmd_plot_script(args: argparse.Namespace, config: RunConfig) -> int:
    """Print a gnuplot script that plots a CSV written by this tool."""
    path = Path(args.csv)
    try:
        lines = [line for line in path.read_text(encoding="utf-8").splitlines() if not line.startswith("#")]
    except OSError as e:
        raise ConfigError(f"cannot read {path}: {e}") from e
    columns = lines[0].split(",") if lines else []

    if columns == series_service.TRAJECTORY_COLUMNS:
        kind = "trajectory"
    elif columns == series_service.SWEEP_COLUMNS:
        kind = "sweep"
    elif columns == series_service.SWEEP_LONG_COLUMNS:
        kind = "long"
    else:
        raise SeriesFormatError(f"{path} is not a trajectory, sweep or long-format CSV")

    script = "set datafile separator ','\nset datafile commentschars '#'\nset key autotitle columnhead\n"
    provenance = series_service.provenance_line(header_for(config, source=path.name, kind=kind))
    emit(config, provenance + script + PLOT_TEMPLATES[kind](path.as_posix()))
    return EXIT_OK


# Entry point
def main(argv: Optional[Sequence[str]] = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)

    verbosity = getattr(args, "verbose", 0) or 0
    if verbosity:
        set_log_level("DEBUG" if verbosity > 1 else "INFO")

    try:
        config = run_config_from_args(args)
        logger.info("Command starting", command=args.command, config_hash=config.config_hash())
        code = args.handler(args, config)
        logger.info("Command completed", command=args.command, exit_code=code)
        return code
    except (ConfigError, TerrainSyntaxError, SeriesFormatError, AnalysisError) as e:
        sys.stderr.write(f"error: {e}\n")
        return EXIT_CONFIG
    except (DynamicsError, InfeasibleTerrainError) as e:
        sys.stderr.write(f"infeasible: {e}\n")
        return EXIT_INFEASIBLE
    except SolverError as e:
        sys.stderr.write(f"solver: {e}\n")
        return EXIT_NOT_CONVERGED
    except GaitPlannerError as e:
        logger.error("Command failed", command=args.command, error=str(e), exc_info=True)
        sys.stderr.write(f"error: {e}\n")
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
