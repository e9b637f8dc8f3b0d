"""Comparison protocol: BC, uniform DAgger, and the scheduled variants.

Every method is charged for expert demonstrations the same way: one episode
collected equals one demo, and a curve point reports the mean evaluation
success against the cumulative demos per task paid so far. BC is a single
offline training phase per budget level on uniformly collected expert data;
the DAgger variants share the engine and differ only in how the round
budget is split across tasks.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Mapping, Sequence

import numpy as np

from .config import ExperimentConfig, canonical_method, with_method_and_seed
from .data import AggregatedDataset
from .engine import RoundRecord, TaskRoundMetrics, collect_task_data, make_evaluator, run_dagger
from .kalman import SuccessMeasurement
from .learner import MultitaskLearner, train_steps
from .rng import BC_DATA, EVAL, INIT, substream
from .scheduler import AllocationPlan, uniform_split
from .suite import SyntheticSuite, evaluate_policy


@dataclass(frozen=True)
class MethodSpec:
    name: str

    @classmethod
    def from_name(cls, name: str) -> "MethodSpec":
        return cls(canonical_method(name))

    @property
    def is_dagger(self) -> bool:
        return self.name != "BC"


@dataclass(frozen=True)
class CurvePoint:
    """One (budget spent, performance) sample of a method's learning curve."""

    cumulative_demos_per_task: float
    mean_success: float
    per_task_success: tuple[float, ...]
    seed: int


@dataclass
class MethodRun:
    """One seed of one method: its curve and the underlying round records."""

    method: str
    seed: int
    points: list[CurvePoint]
    records: list[RoundRecord]


def build_learner(config: ExperimentConfig, suite: SyntheticSuite, *seed_path: int) -> MultitaskLearner:
    rng = substream(config.master_seed, INIT, *seed_path)
    return MultitaskLearner(
        kind=config.learner_kind,
        obs_dim=suite.obs_dim,
        act_dim=suite.act_dim,
        num_tasks=suite.num_tasks,
        encoder_dim=config.encoder_dim,
        embedding_dim=config.embedding_dim,
        hidden_dim=config.hidden_dim,
        rng=rng,
    )


def points_from_records(records: Sequence[RoundRecord], n: int, seed: int) -> list[CurvePoint]:
    points = []
    for rec in records:
        points.append(
            CurvePoint(
                cumulative_demos_per_task=rec.cumulative_episodes / n,
                mean_success=rec.mean_eval_success,
                per_task_success=tuple(m.eval_success for m in rec.per_task),
                seed=seed,
            )
        )
    return points


def run_dagger_seed(config: ExperimentConfig, suite: SyntheticSuite, on_round=None) -> MethodRun:
    learner = build_learner(config, suite, 0)
    records = run_dagger(
        config, suite, learner, evaluator=make_evaluator(config, suite), on_round=on_round,
    )
    return MethodRun(
        method=config.method,
        seed=config.master_seed,
        points=points_from_records(records, suite.num_tasks, config.master_seed),
        records=records,
    )


def bc_budget_levels(config: ExperimentConfig, n: int) -> list[tuple[int, int]]:
    """(round, total-episode budget) pairs matched to the DAgger rounds' spend.

    ``bc_level_stride`` thins the grid (every other round, say) while always
    keeping the first and final budgets so the x-axes stay comparable.
    """
    d0 = config.initial_demos_per_task
    rounds = list(range(0, config.rounds + 1, config.bc_level_stride))
    if rounds[-1] != config.rounds:
        rounds.append(config.rounds)
    return [(k, n * d0 + k * config.budget_per_round) for k in rounds]


def run_bc_seed(config: ExperimentConfig, suite: SyntheticSuite, on_round=None) -> MethodRun:
    """One-shot behavior cloning at each matched budget level.

    Each level gets a fresh learner, a uniformly collected pure-expert
    dataset of the level's size, and a single training phase with the same
    step budget every other training phase in this artifact gets
    (``bc_steps``, defaulting to the per-round step count). Records mirror
    the DAgger schema so the run log format is one and the same.
    """
    if config.eval_episodes < 1:
        raise ValueError("BC curves need eval_episodes >= 1")
    n = suite.num_tasks
    seed = config.master_seed
    records: list[RoundRecord] = []
    prev_counts = [0] * n
    for level, total in bc_budget_levels(config, n):
        counts = uniform_split(total, n)
        dataset = AggregatedDataset(n)
        measurements: list[SuccessMeasurement] = []
        sample_counts: list[int] = []
        for tid in range(n):
            rng = substream(seed, BC_DATA, level, tid)
            samples, meas = collect_task_data(
                tid, None, suite.experts[tid], suite.envs[tid], counts[tid], 0.0, rng
            )
            dataset.extend(samples)
            measurements.append(meas)
            sample_counts.append(len(samples))
        learner = build_learner(config, suite, level)
        loss_start, loss_end = train_steps(
            learner, dataset, config.bc_steps, config.batch_size,
            config.learning_rate, substream(seed, BC_DATA, level), optimizer=config.optimizer,
        )
        rates = evaluate_policy(learner, suite, config.eval_episodes, substream(seed, EVAL, level))
        increments = [c - p for c, p in zip(counts, prev_counts)]
        prev_counts = counts
        nan = float("nan")
        record = RoundRecord(
            round_index=level,
            allocation=AllocationPlan(
                counts=tuple(increments),
                budget=sum(increments),
                min_per_task=0,
                probabilities=tuple([1.0 / n] * n),
                normalized_scores=tuple([0.0] * n),
                raw_metrics=tuple([0.0] * n),
            ),
            per_task=tuple(
                TaskRoundMetrics(
                    raw_success=measurements[i],
                    loss_start=float(loss_start[i]),
                    loss_end=float(loss_end[i]),
                    gain=max(0.0, float(loss_start[i]) - float(loss_end[i])),
                    filtered_estimate=nan,
                    filtered_variance=nan,
                    scheduler_metric=nan,
                    samples_collected=sample_counts[i],
                    eval_success=float(rates[i]),
                )
                for i in range(n)
            ),
            epsilon_used=0.0,
            dataset_size=len(dataset),
            cumulative_episodes=total,
            mean_eval_success=float(np.mean(rates)),
        )
        records.append(record)
        if on_round is not None:
            on_round(record)
    return MethodRun(
        method="BC",
        seed=seed,
        points=points_from_records(records, n, seed),
        records=records,
    )


def run_seed(config: ExperimentConfig, suite: SyntheticSuite, on_round=None) -> MethodRun:
    if config.is_dagger:
        return run_dagger_seed(config, suite, on_round=on_round)
    return run_bc_seed(config, suite, on_round=on_round)


def run_method(
    method: MethodSpec | str,
    suite: SyntheticSuite,
    config: ExperimentConfig,
    seeds: Sequence[int],
) -> list[MethodRun]:
    """The method's learning curve, one run per seed on the shared suite."""
    spec = method if isinstance(method, MethodSpec) else MethodSpec.from_name(method)
    runs = []
    for seed in seeds:
        runs.append(run_seed(with_method_and_seed(config, spec.name, seed), suite))
    return runs


def demos_to_threshold(curves: Sequence[CurvePoint], threshold: float) -> float | None:
    """Mean demos-per-task at which the per-seed curves first reach the threshold.

    Linear interpolation between the two bracketing points; a point exactly
    at the threshold counts as the crossing. Returns None ("unreached") if
    any seed never crosses.
    """
    if not 0.0 < threshold <= 1.0:
        raise ValueError(f"threshold must be in (0, 1], got {threshold}")
    by_seed: dict[int, list[CurvePoint]] = {}
    for point in curves:
        by_seed.setdefault(point.seed, []).append(point)
    crossings = []
    for points in by_seed.values():
        xs = [p.cumulative_demos_per_task for p in points]
        ys = [p.mean_success for p in points]
        crossing = None
        for j, y in enumerate(ys):
            if y >= threshold:
                if j == 0:
                    crossing = xs[0]
                else:  # ys[j-1] < threshold <= y, else the scan stopped earlier
                    frac = (threshold - ys[j - 1]) / (y - ys[j - 1])
                    crossing = xs[j - 1] + frac * (xs[j] - xs[j - 1])
                break
        if crossing is None:
            return None
        crossings.append(crossing)
    if not crossings:
        return None
    return float(np.mean(crossings))


def mean_curve(curves: Sequence[CurvePoint]) -> list[tuple[float, float, float]]:
    """(x, mean, std) aggregated over seeds at each budget point."""
    by_x: dict[float, list[float]] = {}
    for p in curves:
        by_x.setdefault(round(p.cumulative_demos_per_task, 9), []).append(p.mean_success)
    out = []
    for x in sorted(by_x):
        vals = np.asarray(by_x[x])
        out.append((x, float(vals.mean()), float(vals.std())))
    return out


@dataclass(frozen=True)
class HardestTaskReport:
    task_index: int
    final_success: dict[str, float]  # method -> mean success on that task at the end
    curves: dict[str, list[tuple[float, float]]]  # method -> (x, mean success on task)


def hardest_task_report(results: Mapping[str, Sequence[CurvePoint]]) -> HardestTaskReport:
    """Isolate the task with the lowest final success, pooled across methods.

    Ties break toward the lowest task index so reports are stable run to run.
    """
    if not results or all(len(points) == 0 for points in results.values()):
        raise ValueError("hardest_task_report needs at least one completed run")
    finals: list[list[float]] = []
    for points in results.values():
        last_x = max(p.cumulative_demos_per_task for p in points)
        for p in points:
            if p.cumulative_demos_per_task == last_x:
                finals.append(list(p.per_task_success))
    per_task_final = np.nanmean(np.asarray(finals), axis=0)
    hardest = int(np.argmin(per_task_final))  # argmin takes the lowest index on ties

    curves: dict[str, list[tuple[float, float]]] = {}
    final_success: dict[str, float] = {}
    for method, points in results.items():
        by_x: dict[float, list[float]] = {}
        for p in points:
            by_x.setdefault(round(p.cumulative_demos_per_task, 9), []).append(
                p.per_task_success[hardest]
            )
        curve = [(x, float(np.mean(by_x[x]))) for x in sorted(by_x)]
        curves[method] = curve
        final_success[method] = curve[-1][1]
    return HardestTaskReport(task_index=hardest, final_success=final_success, curves=curves)


def allocation_total_variation(records: Sequence[RoundRecord]) -> list[float]:
    """TV distance between consecutive scheduled rounds' allocation probabilities.

    The seed round (index 0) is not a scheduled allocation and is skipped.
    """
    plans = [r.allocation.probabilities for r in records if r.round_index >= 1]
    return [
        0.5 * float(np.abs(np.asarray(a) - np.asarray(b)).sum())
        for a, b in zip(plans, plans[1:])
    ]
