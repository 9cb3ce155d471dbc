"""Command-line harness.

Subcommands: ``run`` (one scenario), ``experiment`` (one of the three
sweeps), ``validate-config``, and ``plot-data`` (tidy CSV for external
plotting).  Exit codes: 0 success, 1 invalid input, 2 run failure.
"""

from __future__ import annotations

import argparse
import sys
from pathlib import Path

from .engine import (
    Density,
    InvalidConfig,
    ScenarioConfig,
    SystemMode,
    load_config,
    run_scenario,
    validate_config,
    write_metrics_csv,
)
from .experiments import (
    EXPERIMENT_IDS,
    ExperimentSpec,
    InvalidSpec,
    RunFailure,
    run_experiment,
    tidy_plot_csv,
)


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="lanesim",
        description="V2V lane-selection assistance simulator",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    run_p = sub.add_parser("run", help="run one scenario and write its metrics CSV")
    run_p.add_argument("--config", type=Path, help="scenario config file")
    run_p.add_argument("--seed", type=int, help="override the run seed")
    run_p.add_argument("--mode", choices=[m.value for m in SystemMode])
    run_p.add_argument("--density", choices=[d.value for d in Density])
    run_p.add_argument("--oda-budget", type=int)
    run_p.add_argument("--tx-range", type=float)
    run_p.add_argument("--vehicles", type=int, help="override the vehicle count")
    run_p.add_argument("--duration", type=float, help="simulated seconds")
    run_p.add_argument("--out-dir", type=Path, default=Path("."))

    exp_p = sub.add_parser("experiment", help="run one of the paper's experiments")
    exp_p.add_argument("name", choices=EXPERIMENT_IDS)
    exp_p.add_argument("--config", type=Path, help="base scenario config file")
    exp_p.add_argument("--seeds", type=int, default=30, help="seeds per cell")
    exp_p.add_argument("--seed", type=int, default=1, help="first seed")
    exp_p.add_argument("--mode", choices=[m.value for m in SystemMode],
                       help="treatment mode (default proposed)")
    exp_p.add_argument("--oda-budget", type=int)
    exp_p.add_argument("--tx-range", type=float)
    exp_p.add_argument("--duration", type=float)
    exp_p.add_argument("--jobs", type=int, default=1)
    exp_p.add_argument("--out-dir", type=Path, default=Path("."))

    val_p = sub.add_parser("validate-config", help="check a scenario config file")
    val_p.add_argument("config", type=Path)

    plot_p = sub.add_parser("plot-data", help="reshape runs.csv for plotting")
    plot_p.add_argument("runs_csv", type=Path)
    plot_p.add_argument("--out", type=Path, help="output path (default stdout)")

    return parser


def _scenario_from_args(args: argparse.Namespace) -> ScenarioConfig:
    cfg = load_config(args.config) if args.config else ScenarioConfig()
    if getattr(args, "seed", None) is not None:
        cfg.seed = args.seed
    if getattr(args, "mode", None):
        cfg.system_mode = SystemMode(args.mode)
    if getattr(args, "density", None):
        cfg.density = Density(args.density)
    if getattr(args, "oda_budget", None) is not None:
        cfg.oda_budget = args.oda_budget
    if getattr(args, "tx_range", None) is not None:
        cfg.channel.tx_range_m = args.tx_range
    if getattr(args, "vehicles", None) is not None:
        cfg.vehicle_count = args.vehicles
    if getattr(args, "duration", None) is not None:
        cfg.duration_s = args.duration
    validate_config(cfg)
    return cfg


def _cmd_run(args: argparse.Namespace) -> int:
    cfg = _scenario_from_args(args)
    metrics = run_scenario(cfg)
    args.out_dir.mkdir(parents=True, exist_ok=True)
    out = args.out_dir / "metrics.csv"
    write_metrics_csv(metrics, out)
    mean = metrics.mean_travel_time_s
    print(
        f"run seed={cfg.seed} mode={cfg.system_mode.value} "
        f"traversals={len(metrics.traversals)} "
        f"mean_travel_time_s={'n/a' if mean is None else f'{mean:.2f}'} "
        f"odas={metrics.odas_issued}/{metrics.odas_answered} -> {out}"
    )
    return 0


def _cmd_experiment(args: argparse.Namespace) -> int:
    base = load_config(args.config) if args.config else ScenarioConfig()
    if args.oda_budget is not None:
        base.oda_budget = args.oda_budget
    if args.tx_range is not None:
        base.channel.tx_range_m = args.tx_range
    if args.duration is not None:
        base.duration_s = args.duration
    spec = ExperimentSpec(
        experiment_id=args.name,
        seeds=list(range(args.seed, args.seed + args.seeds)),
        base=base,
    )
    if args.mode:
        spec.treatment_mode = SystemMode(args.mode)
    summary, _ = run_experiment(spec, out_dir=args.out_dir, jobs=args.jobs)
    for cell in summary.cells:
        print(
            f"{summary.experiment_id} cell={cell.cell} n={cell.n} "
            f"mean_delta_pct={cell.mean_delta_pct:+.3f} "
            f"[{cell.min_delta_pct:+.3f}, {cell.max_delta_pct:+.3f}] "
            f"stderr={cell.stderr:.3f}"
        )
    print(f"artifacts in {args.out_dir}/runs.csv and {args.out_dir}/summary.csv")
    return 0


def _cmd_validate(args: argparse.Namespace) -> int:
    cfg = load_config(args.config)
    validate_config(cfg)
    print(f"{args.config}: ok")
    return 0


def _cmd_plot_data(args: argparse.Namespace) -> int:
    tidy = tidy_plot_csv(args.runs_csv.read_text())
    if args.out:
        args.out.write_text(tidy)
    else:
        sys.stdout.write(tidy)
    return 0


def main(argv: list[str] | None = None) -> int:
    parser = _build_parser()
    args = parser.parse_args(argv)
    handlers = {
        "run": _cmd_run,
        "experiment": _cmd_experiment,
        "validate-config": _cmd_validate,
        "plot-data": _cmd_plot_data,
    }
    try:
        return handlers[args.command](args)
    except (InvalidConfig, InvalidSpec, FileNotFoundError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except RunFailure as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
