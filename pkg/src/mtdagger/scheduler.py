"""Demo-budget scheduling across tasks.

Per-task signals (task need = one minus the filtered success estimate, or
performance gain = the drop in a task's imitation loss over one training
phase) are rank-normalized to [0, 1] and pushed through a temperature
softmax, which yields allocation probabilities. The integer demo counts are
the largest-remainder rounding of probability * budget, subject to a
per-task minimum. Rank normalization makes the pipeline invariant to any
monotone rescaling of the raw metric and keeps one runaway task from
swallowing the whole budget.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np


class InfeasibleBudgetError(ValueError):
    """The per-task minimum cannot be met within the round budget."""


class SchedulerMode(enum.Enum):
    TASK_NEED = "task-need"
    PERFORMANCE_GAIN = "performance-gain"
    UNIFORM = "uniform"


@dataclass(frozen=True)
class SchedulerParams:
    temperature: float = 0.5
    budget: int = 36
    min_per_task: int = 1


@dataclass(frozen=True)
class AllocationPlan:
    """Integer demo counts for one round, plus the signals that produced them.

    ``counts`` always sums exactly to ``budget`` and every entry is at least
    ``min_per_task``. The probability / metric / score vectors are kept for
    the run log; for a uniform split they are 1/N and zeros.
    """

    counts: tuple[int, ...]
    budget: int
    min_per_task: int
    probabilities: tuple[float, ...] = field(default=())
    normalized_scores: tuple[float, ...] = field(default=())
    raw_metrics: tuple[float, ...] = field(default=())

    def __post_init__(self) -> None:
        if self.budget < 1:
            raise InfeasibleBudgetError(f"budget must be >= 1, got {self.budget}")
        if self.min_per_task < 0:
            raise ValueError(f"min_per_task must be >= 0, got {self.min_per_task}")
        if not self.counts:
            raise ValueError("allocation needs at least one task")
        if any(c < self.min_per_task for c in self.counts):
            raise ValueError(f"count below the per-task minimum: {self.counts}")
        if sum(self.counts) != self.budget:
            raise ValueError(f"counts {self.counts} do not sum to budget {self.budget}")


def compute_need(estimate: float) -> float:
    """Task need: the inverse of the (filtered) success probability."""
    if not 0.0 <= estimate <= 1.0:
        raise ValueError(f"estimate must be in [0, 1], got {estimate}")
    return 1.0 - estimate


def compute_gain(loss_start: float, loss_end: float) -> float:
    """Performance gain: the non-negative drop in imitation loss."""
    for name, value in (("loss_start", loss_start), ("loss_end", loss_end)):
        if not math.isfinite(value) or value < 0.0:
            raise ValueError(f"{name} must be finite and >= 0, got {value}")
    return max(0.0, loss_start - loss_end)


def rank_normalize(metrics: Sequence[float]) -> list[float]:
    """Map metric values to (rank - 1) / (N - 1), rank 1 being the lowest.

    Ties are broken by ascending task index (stable sort) so that repeated
    runs produce identical schedules. A single task normalizes to 0.
    """
    n = len(metrics)
    if n == 0:
        raise ValueError("rank_normalize requires at least one metric value")
    values = np.asarray(metrics, dtype=float)
    if not np.all(np.isfinite(values)):
        raise ValueError(f"metrics must be finite, got {list(metrics)}")
    if n == 1:
        return [0.0]
    order = np.argsort(values, kind="stable")
    normalized = np.empty(n, dtype=float)
    normalized[order] = np.arange(n, dtype=float) / (n - 1)
    return normalized.tolist()


def uniform_split(budget: int, n: int) -> list[int]:
    """Equal integer split of ``budget`` over ``n`` slots, remainder to the lowest indices."""
    if n < 1:
        raise ValueError("need at least one task")
    base, rem = divmod(budget, n)
    return [base + 1 if i < rem else base for i in range(n)]


def softmax_probabilities(scores: Sequence[float], temperature: float) -> np.ndarray:
    if temperature <= 0.0:
        raise ValueError(f"temperature must be > 0, got {temperature}")
    z = np.asarray(scores, dtype=float) / temperature
    if not np.all(np.isfinite(z)):
        raise ValueError(f"scores must be finite, got {list(scores)}")
    z -= z.max()  # overflow guard; softmax is shift-invariant
    e = np.exp(z)
    return e / e.sum()


def softmax_allocate(
    scores: Sequence[float],
    temperature: float,
    budget: int,
    min_per_task: int,
    raw_metrics: Sequence[float] | None = None,
) -> AllocationPlan:
    """Turn priority scores into integer demo counts summing exactly to the budget.

    Ideal counts are max(min_per_task, probability * budget). Integerization
    is largest-remainder: floor everything, then hand out the missing units
    in descending fractional-part order (ties by ascending index). If the
    floors overshoot the budget (many minimums binding), units are removed
    round-robin from tasks above the minimum in ascending fractional-part
    order. Both passes keep the result an L1-closest integer plan to the
    ideal allocation under the floor constraint.
    """
    n = len(scores)
    if n == 0:
        raise ValueError("softmax_allocate requires at least one score")
    if budget < 1:
        raise InfeasibleBudgetError(f"budget must be >= 1, got {budget}")
    if min_per_task < 0:
        raise ValueError(f"min_per_task must be >= 0, got {min_per_task}")
    if n * min_per_task > budget:
        raise InfeasibleBudgetError(
            f"minimum allocation infeasible: {n} tasks x {min_per_task} > budget {budget}"
        )

    probs = softmax_probabilities(scores, temperature)
    ideal = np.maximum(float(min_per_task), probs * budget)
    counts = np.floor(ideal).astype(int)
    fracs = ideal - counts

    shortfall = budget - int(counts.sum())
    if shortfall > 0:
        order = sorted(range(n), key=lambda i: (-fracs[i], i))
        for i in order[:shortfall]:
            counts[i] += 1
    elif shortfall < 0:
        order = sorted(range(n), key=lambda i: (fracs[i], i))
        excess = -shortfall
        while excess > 0:
            removed = False
            for i in order:
                if excess == 0:
                    break
                if counts[i] > min_per_task:
                    counts[i] -= 1
                    excess -= 1
                    removed = True
            if not removed:  # cannot happen once feasibility holds
                raise InfeasibleBudgetError("unable to reduce counts to the budget")

    raw = tuple(float(m) for m in raw_metrics) if raw_metrics is not None else tuple([0.0] * n)
    return AllocationPlan(
        counts=tuple(int(c) for c in counts),
        budget=budget,
        min_per_task=min_per_task,
        probabilities=tuple(float(p) for p in probs),
        normalized_scores=tuple(float(s) for s in scores),
        raw_metrics=raw,
    )


def uniform_plan(budget: int, n: int, min_per_task: int) -> AllocationPlan:
    counts = uniform_split(budget, n)
    if min(counts) < min_per_task:
        raise InfeasibleBudgetError(
            f"uniform split of {budget} over {n} tasks violates minimum {min_per_task}"
        )
    return AllocationPlan(
        counts=tuple(counts),
        budget=budget,
        min_per_task=min_per_task,
        probabilities=tuple([1.0 / n] * n),
        normalized_scores=tuple([0.0] * n),
        raw_metrics=tuple([0.0] * n),
    )


def _estimates(states_or_values: Sequence) -> list[float]:
    return [float(getattr(s, "estimate", s)) for s in states_or_values]


def schedule_round(
    mode: SchedulerMode,
    tracker_states: Sequence,
    gains: Sequence[float],
    params: SchedulerParams,
) -> AllocationPlan:
    """Produce the round's allocation plan from the chosen metric.

    ``tracker_states`` may be KalmanState objects or plain floats (the
    no-filter ablation feeds raw rates). Uniform mode ignores both signals.
    """
    if mode is SchedulerMode.UNIFORM:
        n = len(tracker_states) if len(tracker_states) else len(gains)
        return uniform_plan(params.budget, n, params.min_per_task)
    if mode is SchedulerMode.TASK_NEED:
        raw = [compute_need(e) for e in _estimates(tracker_states)]
    elif mode is SchedulerMode.PERFORMANCE_GAIN:
        raw = [float(g) for g in gains]
        if any(not math.isfinite(g) or g < 0.0 for g in raw):
            raise ValueError(f"gains must be finite and >= 0, got {raw}")
    else:
        raise ValueError(f"unknown scheduler mode: {mode}")
    scores = rank_normalize(raw)
    return softmax_allocate(
        scores, params.temperature, params.budget, params.min_per_task, raw_metrics=raw
    )
