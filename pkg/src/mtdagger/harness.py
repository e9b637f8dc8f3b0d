"""Run persistence: run directories, the rounds.csv log, summaries, replay.

A run directory is self-describing: `config.toml` is the fully resolved
config snapshot, `rounds.csv` streams one row per round as it completes
(so a crashed run still parses as a valid prefix), and `summary.json`
holds the final per-task table. Re-running the snapshot with the same seed
reproduces `rounds.csv` byte for byte; `replay` checks exactly that.
"""

from __future__ import annotations

import json
import os
import shutil
import tempfile
from dataclasses import dataclass
from pathlib import Path
from typing import Sequence

import numpy as np

from . import __version__
from .config import ExperimentConfig, parse_config, serialize_config, with_method_and_seed
from .engine import DaggerAbortedError, RoundRecord
from .methods import (
    CurvePoint,
    MethodRun,
    demos_to_threshold,
    hardest_task_report,
    mean_curve,
    points_from_records,
    run_seed,
)
from .suite import SyntheticSuite, build_suite

OUTPUT_ROOT_ENV = "MTDAGGER_OUTPUT_ROOT"
CSV_SCHEMA_VERSION = 1

_PER_TASK_COLUMNS = (
    "alloc", "prob", "metric", "score", "raw_rate", "rollouts",
    "estimate", "variance", "loss_start", "loss_end", "gain", "samples", "success",
)


def default_output_root() -> Path:
    return Path(os.environ.get(OUTPUT_ROOT_ENV, "runs"))


def method_slug(name: str) -> str:
    return "".join(c if c.isalnum() else "-" for c in name.lower()).strip("-")


def rounds_header(num_tasks: int) -> list[str]:
    head = ["round", "epsilon", "dataset_size", "cumulative_demos_per_task", "mean_success"]
    for col in _PER_TASK_COLUMNS:
        head.extend(f"{col}_t{i}" for i in range(num_tasks))
    return head


def _fmt(value) -> str:
    if isinstance(value, (int, np.integer)):
        return str(int(value))
    return repr(float(value))


def record_row(record: RoundRecord, num_tasks: int) -> list[str]:
    plan = record.allocation
    row = [
        str(record.round_index),
        _fmt(record.epsilon_used),
        str(record.dataset_size),
        _fmt(record.cumulative_episodes / num_tasks),
        _fmt(record.mean_eval_success),
    ]
    per_task = record.per_task
    columns = {
        "alloc": [str(c) for c in plan.counts],
        "prob": [_fmt(p) for p in plan.probabilities],
        "metric": [_fmt(m.scheduler_metric) for m in per_task],
        "score": [_fmt(s) for s in plan.normalized_scores],
        "raw_rate": [_fmt(m.raw_success.raw_rate) for m in per_task],
        "rollouts": [str(m.raw_success.rollout_count) for m in per_task],
        "estimate": [_fmt(m.filtered_estimate) for m in per_task],
        "variance": [_fmt(m.filtered_variance) for m in per_task],
        "loss_start": [_fmt(m.loss_start) for m in per_task],
        "loss_end": [_fmt(m.loss_end) for m in per_task],
        "gain": [_fmt(m.gain) for m in per_task],
        "samples": [str(m.samples_collected) for m in per_task],
        "success": [_fmt(m.eval_success) for m in per_task],
    }
    for col in _PER_TASK_COLUMNS:
        row.extend(columns[col])
    return row


class RoundsWriter:
    """Streams rows to rounds.csv, flushing per round for crash durability."""

    def __init__(self, path: Path, num_tasks: int):
        self.path = path
        self.num_tasks = num_tasks
        self._fh = open(path, "w", newline="")
        self._fh.write(",".join(rounds_header(num_tasks)) + "\n")
        self._fh.flush()

    def write(self, record: RoundRecord) -> None:
        self._fh.write(",".join(record_row(record, self.num_tasks)) + "\n")
        self._fh.flush()

    def close(self) -> None:
        self._fh.close()


@dataclass
class RunResult:
    config: ExperimentConfig
    run: MethodRun
    directory: Path
    aborted: bool = False


def _write_summary(path: Path, config: ExperimentConfig, run: MethodRun, suite: SyntheticSuite,
                   aborted: bool) -> None:
    final = run.records[-1] if run.records else None
    summary = {
        "version": __version__,
        "csv_schema_version": CSV_SCHEMA_VERSION,
        "method": config.method,
        "master_seed": config.master_seed,
        "aborted": aborted,
        "rounds_completed": len(run.records),
        "final": None,
    }
    if final is not None:
        summary["final"] = {
            "round": final.round_index,
            "dataset_size": final.dataset_size,
            "cumulative_demos_per_task": final.cumulative_episodes / suite.num_tasks,
            "mean_success": final.mean_eval_success,
            "per_task": [
                {
                    "task": i,
                    "tier": suite.specs[i].tier,
                    "success": m.eval_success,
                    "estimate": m.filtered_estimate,
                    "loss_end": m.loss_end,
                    "demos": int(sum(r.allocation.counts[i] for r in run.records)),
                }
                for i, m in enumerate(final.per_task)
            ],
        }
    path.write_text(json.dumps(summary, indent=2, sort_keys=True) + "\n")


def run_experiment(
    config: ExperimentConfig,
    out_dir: Path | str,
    figures: bool = True,
    suite: SyntheticSuite | None = None,
) -> RunResult:
    """Execute one (method, seed) run and persist its artifacts.

    Re-running with the same config and seed overwrites the directory with
    byte-identical contents. On a mid-run environment failure the rows
    written so far stay on disk and the summary is marked aborted.
    """
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    (out_dir / "config.toml").write_text(serialize_config(config))
    if suite is None:
        suite = build_suite(config.suite)

    writer = RoundsWriter(out_dir / "rounds.csv", suite.num_tasks)
    aborted = False
    try:
        run = run_seed(config, suite, on_round=writer.write)
    except DaggerAbortedError as exc:
        aborted = True
        run = MethodRun(
            method=config.method,
            seed=config.master_seed,
            points=points_from_records(exc.records, suite.num_tasks, config.master_seed),
            records=list(exc.records),
        )
    finally:
        writer.close()

    _write_summary(out_dir / "summary.json", config, run, suite, aborted)
    if figures and run.points:
        from .plots import render_run_figure

        render_run_figure(run, out_dir / "curve.png")
    result = RunResult(config=config, run=run, directory=out_dir, aborted=aborted)
    if aborted:
        raise DaggerAbortedError(run.records, f"run aborted; partial artifacts in {out_dir}")
    return result


def replay_run(run_dir: Path | str) -> tuple[bool, str]:
    """Re-execute a run from its config snapshot and byte-compare rounds.csv."""
    run_dir = Path(run_dir)
    csv_path = run_dir / "rounds.csv"
    config = parse_config(path=run_dir / "config.toml")
    original = csv_path.read_bytes()
    tmp = Path(tempfile.mkdtemp(prefix="mtdagger-replay-"))
    try:
        run_experiment(config, tmp, figures=False)
        regenerated = (tmp / "rounds.csv").read_bytes()
    finally:
        shutil.rmtree(tmp, ignore_errors=True)
    if regenerated == original:
        return True, f"replay OK: {csv_path} reproduced byte-identically"
    return False, f"replay MISMATCH: {csv_path} differs from a fresh run of its config"


@dataclass
class CompareResult:
    directory: Path
    results: dict[str, list[CurvePoint]]
    runs: dict[str, list[MethodRun]]
    summary: dict


def compare_experiment(
    config: ExperimentConfig,
    methods: Sequence[str],
    seeds: Sequence[int],
    thresholds: Sequence[float],
    out_dir: Path | str,
    figures: bool = True,
) -> CompareResult:
    """Run a method grid on one shared suite and aggregate the comparison."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    suite = build_suite(config.suite)

    runs: dict[str, list[MethodRun]] = {}
    results: dict[str, list[CurvePoint]] = {}
    for method in methods:
        method_runs = []
        for seed in seeds:
            cfg = with_method_and_seed(config, method, seed)
            sub = out_dir / f"{method_slug(cfg.method)}-seed{seed}"
            method_runs.append(run_experiment(cfg, sub, figures=False, suite=suite).run)
        runs[method_runs[0].method] = method_runs
        results[method_runs[0].method] = [p for r in method_runs for p in r.points]

    comparison = out_dir / "comparison.csv"
    with open(comparison, "w", newline="") as fh:
        fh.write("method,seed,round,cumulative_demos_per_task,mean_success\n")
        for method, method_runs in runs.items():
            for run in method_runs:
                for idx, point in enumerate(run.points):
                    fh.write(
                        f"{method},{run.seed},{idx},"
                        f"{_fmt(point.cumulative_demos_per_task)},{_fmt(point.mean_success)}\n"
                    )

    summary: dict = {
        "version": __version__,
        "seeds": list(seeds),
        "thresholds": [float(t) for t in thresholds],
        "methods": {},
    }
    for method, points in results.items():
        curve = mean_curve(points)
        final_x, final_mean, final_std = curve[-1]
        summary["methods"][method] = {
            "demos_to_threshold": {
                repr(float(t)): demos_to_threshold(points, t) for t in thresholds
            },
            "final_demos_per_task": final_x,
            "final_success_mean": final_mean,
            "final_success_std": final_std,
        }
    hardest = hardest_task_report(results)
    summary["hardest_task"] = {
        "task": hardest.task_index,
        "final_success": hardest.final_success,
    }
    (out_dir / "summary.json").write_text(json.dumps(summary, indent=2, sort_keys=True) + "\n")

    if figures:
        from .plots import render_comparison_figures

        render_comparison_figures(results, thresholds, hardest, out_dir)
    return CompareResult(directory=out_dir, results=results, runs=runs, summary=summary)
