"""Experiment harness: matched-seed sweeps with CSV artifacts.

Each experiment sweeps one scenario dimension; every treatment run is
paired with a control run (system off) from the same seed, and the
paired travel-time delta is what gets aggregated.  Runs inside an
experiment are independent and may execute in parallel; aggregation and
file output happen once all runs complete.
"""

from __future__ import annotations

import csv
import io
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace
from pathlib import Path

from .engine import (
    Density,
    RunMetrics,
    ScenarioConfig,
    SystemMode,
    off_config,
    run_scenario,
)
from .mobility import st_baseline_decision  # noqa: F401  (harness-facing re-export)

EXPERIMENT_IDS = ("congestion_effect", "system_effect", "oda_impact")

DEFAULT_ODA_BUDGETS = (0, 10, 20, 30, 40, 50)


class InvalidSpec(ValueError):
    """Experiment specification violates a declared constraint."""


class RunFailure(RuntimeError):
    """A scenario run failed; carries the cell and seed it belonged to."""


class EmptyInput(ValueError):
    """Aggregation requested over no runs."""


@dataclass
class ExperimentSpec:
    experiment_id: str
    seeds: list[int]
    base: ScenarioConfig = field(default_factory=ScenarioConfig)
    densities: tuple[Density, ...] = (Density.LOW, Density.MEDIUM, Density.HIGH)
    oda_budgets: tuple[int, ...] = DEFAULT_ODA_BUDGETS
    treatment_mode: SystemMode = SystemMode.PROPOSED

    def validate(self) -> None:
        if self.experiment_id not in EXPERIMENT_IDS:
            raise InvalidSpec(f"unknown experiment_id {self.experiment_id!r}")
        if len(self.seeds) < 2:
            raise InvalidSpec("need at least 2 seeds for any statistical claim")
        if len(set(self.seeds)) != len(self.seeds):
            raise InvalidSpec("seeds must be distinct")
        if self.treatment_mode is SystemMode.OFF:
            raise InvalidSpec("treatment_mode cannot be off")
        if self.experiment_id == "oda_impact" and any(
            not 0 <= b <= 50 for b in self.oda_budgets
        ):
            raise InvalidSpec("oda budgets must lie within [0, 50]")


@dataclass
class CellSummary:
    cell: str
    mean_delta_pct: float
    min_delta_pct: float
    max_delta_pct: float
    n: int
    stderr: float


@dataclass
class ExperimentSummary:
    experiment_id: str
    cells: list[CellSummary]


@dataclass
class CellRun:
    """One matched treatment/control pair's outcome."""

    cell: str
    seed: int
    treatment: RunMetrics
    control: RunMetrics


def paired_delta_pct(treatment: RunMetrics, control: RunMetrics) -> float:
    """Relative travel-time change, negative when the treatment is faster."""
    t, c = treatment.mean_travel_time_s, control.mean_travel_time_s
    if t is None or c is None or c == 0:
        raise ValueError("both runs need completed traversals")
    return (t - c) / c * 100.0


def aggregate(runs: list[RunMetrics], cell: str = "") -> CellSummary:
    """Paired-delta statistics over one cell's treatment runs."""
    deltas = [r.delta_pct for r in runs if r.delta_pct is not None]
    if not deltas:
        raise EmptyInput("no paired deltas to aggregate")
    n = len(deltas)
    mean = sum(deltas) / n
    if n > 1:
        var = sum((d - mean) ** 2 for d in deltas) / (n - 1)
        stderr = math.sqrt(var / n)
    else:
        stderr = 0.0
    return CellSummary(
        cell=cell,
        mean_delta_pct=mean,
        min_delta_pct=min(deltas),
        max_delta_pct=max(deltas),
        n=n,
        stderr=stderr,
    )


def _cells_for(spec: ExperimentSpec) -> list[tuple[str, ScenarioConfig]]:
    """Treatment config per sweep cell."""
    cells = []
    if spec.experiment_id in ("congestion_effect", "system_effect"):
        for density in spec.densities:
            cfg = replace(spec.base, density=density, system_mode=spec.treatment_mode)
            cells.append((density.value, cfg))
    else:
        for budget in spec.oda_budgets:
            cfg = replace(
                spec.base,
                density=Density.MEDIUM,
                system_mode=spec.treatment_mode,
                oda_budget=budget,
            )
            cells.append((f"budget_{budget}", cfg))
    return cells


def _run_one(args: tuple[str, int, ScenarioConfig]) -> tuple[str, int, RunMetrics, RunMetrics]:
    cell, seed, cfg = args
    treatment = run_scenario(replace(cfg, seed=seed))
    control = run_scenario(replace(off_config(cfg), seed=seed))
    treatment.delta_pct = paired_delta_pct(treatment, control)
    return cell, seed, treatment, control


def run_experiment(
    spec: ExperimentSpec,
    out_dir: str | Path | None = None,
    jobs: int | None = None,
) -> tuple[ExperimentSummary, list[CellRun]]:
    """Run every (cell, seed) pair plus its matched control.

    Writes ``runs.csv`` and ``summary.csv`` under ``out_dir`` when given.
    Raises :class:`RunFailure` naming the failing cell on any error.
    """
    spec.validate()
    tasks = [
        (cell, seed, cfg) for cell, cfg in _cells_for(spec) for seed in spec.seeds
    ]
    results: list[tuple[str, int, RunMetrics, RunMetrics]] = []
    try:
        if jobs is not None and jobs > 1:
            with ProcessPoolExecutor(max_workers=jobs) as pool:
                results = list(pool.map(_run_one, tasks, chunksize=1))
        else:
            results = [_run_one(t) for t in tasks]
    except Exception as exc:
        raise RunFailure(f"experiment {spec.experiment_id} failed: {exc}") from exc
    runs = [CellRun(cell, seed, t, c) for cell, seed, t, c in results]
    runs.sort(key=lambda r: (_cell_order(spec, r.cell), r.seed))
    cells = []
    for cell, _ in _cells_for(spec):
        cell_runs = [r.treatment for r in runs if r.cell == cell]
        cells.append(aggregate(cell_runs, cell))
    summary = ExperimentSummary(experiment_id=spec.experiment_id, cells=cells)
    if out_dir is not None:
        out = Path(out_dir)
        out.mkdir(parents=True, exist_ok=True)
        (out / "runs.csv").write_text(runs_csv(spec, runs))
        (out / "summary.csv").write_text(summary_csv(summary))
    return summary, runs


def _cell_order(spec: ExperimentSpec, cell: str) -> int:
    order = [c for c, _ in _cells_for(spec)]
    return order.index(cell)


RUNS_CSV_COLUMNS = [
    "experiment_id",
    "cell",
    "seed",
    "mode",
    "mean_travel_time_s",
    "delta_pct",
    "odas_issued",
    "lane_changes",
    "aborts",
    "beacon_delivery_ratio",
]

SUMMARY_CSV_COLUMNS = [
    "experiment_id",
    "cell",
    "mean_delta_pct",
    "min_delta_pct",
    "max_delta_pct",
    "n",
    "stderr",
]


def _runs_row(
    spec: ExperimentSpec, cell: str, seed: int, mode: str, m: RunMetrics
) -> list[str]:
    mean = m.mean_travel_time_s
    return [
        spec.experiment_id,
        cell,
        str(seed),
        mode,
        "" if mean is None else f"{mean:.6f}",
        "" if m.delta_pct is None else f"{m.delta_pct:.6f}",
        str(m.odas_issued),
        str(m.lane_changes_attempted),
        str(m.lane_changes_aborted),
        f"{m.beacon_delivery_ratio:.6f}",
    ]


def runs_csv(spec: ExperimentSpec, runs: list[CellRun]) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(RUNS_CSV_COLUMNS)
    mode = spec.treatment_mode.value
    for r in runs:
        writer.writerow(_runs_row(spec, r.cell, r.seed, mode, r.treatment))
        writer.writerow(_runs_row(spec, r.cell, r.seed, "off", r.control))
    return buf.getvalue()


def summary_csv(summary: ExperimentSummary) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(SUMMARY_CSV_COLUMNS)
    for c in summary.cells:
        writer.writerow(
            [
                summary.experiment_id,
                c.cell,
                f"{c.mean_delta_pct:.6f}",
                f"{c.min_delta_pct:.6f}",
                f"{c.max_delta_pct:.6f}",
                str(c.n),
                f"{c.stderr:.6f}",
            ]
        )
    return buf.getvalue()


def tidy_plot_csv(runs_csv_text: str) -> str:
    """Long-format (cell, seed, mode, metric, value) rows for plotting."""
    reader = csv.DictReader(io.StringIO(runs_csv_text))
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(["experiment_id", "cell", "seed", "mode", "metric", "value"])
    for row in reader:
        for metric in (
            "mean_travel_time_s",
            "delta_pct",
            "odas_issued",
            "lane_changes",
            "aborts",
            "beacon_delivery_ratio",
        ):
            if row[metric] != "":
                writer.writerow(
                    [
                        row["experiment_id"],
                        row["cell"],
                        row["seed"],
                        row["mode"],
                        metric,
                        row[metric],
                    ]
                )
    return buf.getvalue()
