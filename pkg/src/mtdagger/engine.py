"""Iterative multitask DAgger loop.

One run is: collect a few expert demos per task, train the shared policy,
then repeat for K rounds {train on the aggregated pool, filter last round's
success measurements, schedule this round's demo budget, collect with
epsilon-mixed actions while always recording the expert label, aggregate,
decay epsilon}. Epsilon is the probability of executing the *learner's*
action at each timestep, so the schedule 0.5 -> 0 means round one mixes
half-and-half and later rounds execute the expert while still growing the
dataset at the scheduled per-task rates.

Scheduling at round k consumes measurements from round k-1. At round one
there is no prior collection, so task-need variants fall back to a uniform
split while the gain variant already has signal from the training phase
that just ran.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Protocol, Sequence

import numpy as np

from .config import ExperimentConfig
from .data import AggregatedDataset, EmptyTaskDataError, LabeledSample
from .kalman import FilterParams, KalmanState, SuccessMeasurement, kf_init, kf_update
from .learner import AdamState, train_steps
from .rng import COLLECT, EVAL, TRAIN, substream
from .scheduler import (
    AllocationPlan,
    SchedulerMode,
    SchedulerParams,
    compute_gain,
    schedule_round,
    uniform_plan,
)


class Expert(Protocol):
    def __call__(self, observation: np.ndarray) -> np.ndarray: ...


class Learner(Protocol):
    def act(self, observation: np.ndarray, task_id: int) -> np.ndarray: ...


class TaskEnvironment(Protocol):
    def reset(self, rng: np.random.Generator) -> np.ndarray: ...

    def step(self, action: np.ndarray) -> tuple[np.ndarray, bool, bool]: ...


class TaskSuite(Protocol):
    num_tasks: int
    envs: Sequence[TaskEnvironment]
    experts: Sequence[Expert]


Evaluator = Callable[[Learner, int], np.ndarray]


class DaggerAbortedError(RuntimeError):
    """A task environment failed mid-run; completed round records survive."""

    def __init__(self, records: list["RoundRecord"], message: str):
        super().__init__(message)
        self.records = records


@dataclass(frozen=True)
class MixingSchedule:
    """Learner-action probability and its per-round decay."""

    epsilon: float
    decay: float
    floor: float

    def __post_init__(self) -> None:
        if not 0.0 <= self.epsilon <= 1.0 or not 0.0 <= self.floor <= 1.0:
            raise ValueError(f"epsilon and floor must be in [0, 1], got {self}")
        if self.decay < 0.0:
            raise ValueError(f"decay must be >= 0, got {self.decay}")

    def decayed(self) -> "MixingSchedule":
        return MixingSchedule(max(self.epsilon - self.decay, self.floor), self.decay, self.floor)


@dataclass(frozen=True)
class TaskRoundMetrics:
    """Everything measured for one task in one round."""

    raw_success: SuccessMeasurement
    loss_start: float
    loss_end: float
    gain: float
    filtered_estimate: float
    filtered_variance: float
    scheduler_metric: float  # value the scheduler ranked; nan for uniform rounds
    samples_collected: int
    eval_success: float  # nan when the round was not evaluated


@dataclass(frozen=True)
class RoundRecord:
    round_index: int
    allocation: AllocationPlan
    per_task: tuple[TaskRoundMetrics, ...]
    epsilon_used: float
    dataset_size: int
    cumulative_episodes: int
    mean_eval_success: float


def collect_task_data(
    task_id: int,
    learner: Learner,
    expert: Expert,
    env: TaskEnvironment,
    episodes: int,
    epsilon: float,
    rng: np.random.Generator,
) -> tuple[list[LabeledSample], SuccessMeasurement]:
    """Run episodes with epsilon-mixed actions, recording the expert label at every step.

    Per timestep, the learner's action executes with probability epsilon,
    otherwise the expert's; the stored action is always the expert's answer
    for the visited observation. Episode success feeds the next round's
    scheduling, not this one's.
    """
    if episodes < 0:
        raise ValueError(f"episodes must be >= 0, got {episodes}")
    if not 0.0 <= epsilon <= 1.0:
        raise ValueError(f"epsilon must be in [0, 1], got {epsilon}")
    samples: list[LabeledSample] = []
    successes = 0
    for _ in range(episodes):
        obs = env.reset(rng)
        done = False
        won = False
        while not done:
            expert_action = np.asarray(expert(obs), dtype=float)
            samples.append(LabeledSample(np.asarray(obs, dtype=float), expert_action, task_id))
            if rng.random() < epsilon:
                action = np.asarray(learner.act(obs, task_id), dtype=float)
            else:
                action = expert_action
            obs, done, success = env.step(action)
            won = won or success
        successes += int(won)
    rate = successes / episodes if episodes > 0 else 0.0
    return samples, SuccessMeasurement(rate, episodes)


def train_initial(
    learner,
    dataset: AggregatedDataset,
    steps: int,
    batch_size: int | None,
    lr: float,
    rng: np.random.Generator,
    optimizer: str = "adam",
    adam_state: AdamState | None = None,
) -> tuple[np.ndarray, np.ndarray]:
    """Behavior-clone the policy on the seed dataset; per-task loss endpoints."""
    empty = [tid for tid, c in enumerate(dataset.per_task_counts) if c == 0]
    if empty:
        raise EmptyTaskDataError(f"tasks without samples: {empty}")
    return train_steps(
        learner, dataset, steps, batch_size, lr, rng,
        optimizer=optimizer, adam_state=adam_state,
    )


def _metrics_round(
    suite_n: int,
    measurements: Sequence[SuccessMeasurement],
    sample_counts: Sequence[int],
    loss_start: np.ndarray,
    loss_end: np.ndarray,
    states: Sequence[KalmanState],
    metric_used: Sequence[float],
    eval_rates: np.ndarray | None,
) -> tuple[TaskRoundMetrics, ...]:
    out = []
    for i in range(suite_n):
        out.append(
            TaskRoundMetrics(
                raw_success=measurements[i],
                loss_start=float(loss_start[i]),
                loss_end=float(loss_end[i]),
                gain=compute_gain(float(loss_start[i]), float(loss_end[i])),
                filtered_estimate=states[i].estimate,
                filtered_variance=states[i].variance,
                scheduler_metric=float(metric_used[i]),
                samples_collected=int(sample_counts[i]),
                eval_success=float(eval_rates[i]) if eval_rates is not None else float("nan"),
            )
        )
    return tuple(out)


def run_dagger(
    config: ExperimentConfig,
    suite: TaskSuite,
    learner,
    evaluator: Evaluator | None = None,
    on_round: Callable[[RoundRecord], None] | None = None,
    dataset: AggregatedDataset | None = None,
) -> list[RoundRecord]:
    """Execute the full loop; returns one record per round plus the seed round.

    Records stream through ``on_round`` as they complete, so a crash mid-run
    still leaves a valid prefix on disk. An environment failure raises
    DaggerAbortedError carrying the completed records.
    """
    n = suite.num_tasks
    mode = config.scheduler_mode  # raises for BC, which has no rounds
    if config.initial_demos_per_task < 1:
        raise ValueError("initial_demos_per_task must be >= 1")
    params = FilterParams(config.filter_q, config.filter_r0)
    sched = SchedulerParams(config.temperature, config.budget_per_round, config.n_min)
    seed = config.master_seed

    if dataset is None:
        dataset = AggregatedDataset(n)
    records: list[RoundRecord] = []

    def emit(record: RoundRecord) -> None:
        records.append(record)
        if on_round is not None:
            on_round(record)

    # Seed round: pure-expert demos for every task, then the initial BC fit.
    init_meas: list[SuccessMeasurement] = []
    init_counts: list[int] = []
    for tid in range(n):
        rng = substream(seed, COLLECT, 0, tid)
        samples, meas = collect_task_data(
            tid, learner, suite.experts[tid], suite.envs[tid],
            config.initial_demos_per_task, 0.0, rng,
        )
        dataset.extend(samples)
        init_meas.append(meas)
        init_counts.append(len(samples))
    opt_state = AdamState(learner.params) if config.optimizer == "adam" else None
    loss0_start, loss0_end = train_initial(
        learner, dataset, config.train_steps, config.batch_size,
        config.learning_rate, substream(seed, TRAIN, 0),
        optimizer=config.optimizer, adam_state=opt_state,
    )

    states: list[KalmanState] = [
        kf_init(config.prior_estimate, config.prior_variance) for _ in range(n)
    ]
    last_raw: list[float] = [config.prior_estimate] * n
    cumulative = n * config.initial_demos_per_task
    eval0 = evaluator(learner, 0) if evaluator is not None else None
    emit(
        RoundRecord(
            round_index=0,
            allocation=AllocationPlan(
                counts=tuple([config.initial_demos_per_task] * n),
                budget=cumulative,
                min_per_task=config.initial_demos_per_task,
                probabilities=tuple([1.0 / n] * n),
                normalized_scores=tuple([0.0] * n),
                raw_metrics=tuple([0.0] * n),
            ),
            per_task=_metrics_round(
                n, init_meas, init_counts, loss0_start, loss0_end, states,
                [float("nan")] * n, eval0,
            ),
            epsilon_used=0.0,
            dataset_size=len(dataset),
            cumulative_episodes=cumulative,
            mean_eval_success=float(np.mean(eval0)) if eval0 is not None else float("nan"),
        )
    )

    epsilon = config.epsilon_start
    for k in range(1, config.rounds + 1):
        lr_k = config.learning_rate * config.lr_round_decay**k
        loss_start, loss_end = train_steps(
            learner, dataset, config.train_steps, config.batch_size,
            lr_k, substream(seed, TRAIN, k),
            optimizer=config.optimizer, adam_state=opt_state,
        )
        gains = [compute_gain(float(loss_start[i]), float(loss_end[i])) for i in range(n)]

        if k >= 2:
            prev = records[k - 1].per_task
            updated = []
            for i in range(n):
                meas = prev[i].raw_success
                if meas.rollout_count > 0:
                    updated.append(kf_update(states[i], params, meas))
                    last_raw[i] = meas.raw_rate
                else:  # no rollouts, no information: the state carries over
                    updated.append(states[i])
            states = updated

        need_bootstrap = k == 1 and mode is SchedulerMode.TASK_NEED
        if mode is SchedulerMode.UNIFORM or need_bootstrap:
            plan = uniform_plan(config.budget_per_round, n, config.n_min)
            metric_used = [float("nan")] * n
        elif mode is SchedulerMode.TASK_NEED:
            inputs = [s.estimate for s in states] if config.uses_kalman_need else list(last_raw)
            plan = schedule_round(mode, inputs, gains, sched)
            metric_used = plan.raw_metrics
        else:
            plan = schedule_round(mode, states, gains, sched)
            metric_used = plan.raw_metrics

        collected: list[list[LabeledSample]] = []
        measurements: list[SuccessMeasurement] = []
        try:
            for tid in range(n):
                rng = substream(seed, COLLECT, k, tid)
                samples, meas = collect_task_data(
                    tid, learner, suite.experts[tid], suite.envs[tid],
                    plan.counts[tid], epsilon, rng,
                )
                collected.append(samples)
                measurements.append(meas)
        except Exception as exc:
            raise DaggerAbortedError(
                records, f"round {k}: task collection failed ({exc})"
            ) from exc

        for samples in collected:  # merge in ascending task order
            dataset.extend(samples)
        cumulative += plan.budget
        eval_rates = evaluator(learner, k) if evaluator is not None else None
        emit(
            RoundRecord(
                round_index=k,
                allocation=plan,
                per_task=_metrics_round(
                    n, measurements, [len(s) for s in collected],
                    loss_start, loss_end, states, metric_used, eval_rates,
                ),
                epsilon_used=epsilon,
                dataset_size=len(dataset),
                cumulative_episodes=cumulative,
                mean_eval_success=(
                    float(np.mean(eval_rates)) if eval_rates is not None else float("nan")
                ),
            )
        )
        epsilon = max(epsilon - config.epsilon_decay, config.epsilon_min)
    return records


def make_evaluator(config: ExperimentConfig, suite) -> Evaluator | None:
    """Per-round pure-policy evaluation hook (reporting only)."""
    if config.eval_episodes < 1:
        return None
    from .suite import evaluate_policy  # synthetic-suite specific

    def evaluate(learner, round_index: int) -> np.ndarray:
        rng = substream(config.master_seed, EVAL, round_index)
        return evaluate_policy(learner, suite, config.eval_episodes, rng)

    return evaluate
