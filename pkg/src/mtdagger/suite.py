"""Synthetic multitask goal-reaching benchmark.

Each task is a small dynamical system s' = a*s + u + field(s) + drift + w
that the policy must drive into a ball around the origin within a fixed
episode horizon (success is first passage; episodes always run the full
horizon so every demonstration contributes equally many samples). The
task-specific field is a smooth random flow plus an outward radial moat,
both fading out near the goal; the analytic expert cancels the field and
drift exactly and contracts the closed loop, so it is near-perfect by
construction, while a cloned policy fails on any approach direction whose
stretch of field it has not yet learned to cancel.

Episodes start in a wide per-task cone of directions, so learning is
coverage-limited: success tracks the fraction of approach directions whose
corridor is fit, which is what makes per-task demonstration counts the
binding resource. Tier difficulty scales the field's amplitude, spatial
frequency and feature count, the moat, the start distance, the observation
noise, and the success radius.

Experts are deterministic functions of the (noisy) observation, so recorded
labels replay exactly. Observations are the noisy state concatenated with
the task one-hot. Suite construction is deterministic in the seed and
Monte-Carlo-validates every expert before accepting it.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .rng import SUITE, substream

EXPERT_SUCCESS_FLOOR = 0.99
EXPERT_VALIDATION_EPISODES = 1000
EXPERT_BUILD_ATTEMPTS = 10

# Difficulty tiers. `closed_loop` is the expert's contraction factor a - k;
# `texture` scales a per-task smooth nonlinear field in the *dynamics* that
# the expert cancels exactly. A cloned policy that has not yet fit the
# texture leaves it uncanceled and stalls mid-field, so texture strength is
# what makes a task data-hungry; `noise_std` widens the observed input
# distribution and adds control jitter on top.
TIER_TABLE: dict[str, list[dict]] = {
    "three-tier": [
        {"name": "easy", "dynamics_gain": 0.90, "closed_loop": 0.42,
         "noise_std": 0.008, "texture": 0.15, "frequency": 1.0, "features": 2, "moat": 0.0,
         "start_radius": (0.75, 0.95), "radius_scale": 1.8},
        {"name": "medium", "dynamics_gain": 0.97, "closed_loop": 0.50,
         "noise_std": 0.015, "texture": 0.32, "frequency": 1.7, "features": 3, "moat": 0.27,
         "start_radius": (0.95, 1.15), "radius_scale": 1.45},
        {"name": "hard", "dynamics_gain": 1.02, "closed_loop": 0.55,
         "noise_std": 0.05, "texture": 2.80, "frequency": 4.35, "features": 8, "moat": 0.58,
         "start_radius": (1.9, 2.3), "radius_scale": 1.0},
    ],
    "identical": [
        {"name": "flat", "dynamics_gain": 0.95, "closed_loop": 0.50,
         "noise_std": 0.03, "texture": 0.2, "frequency": 1.8, "features": 4, "moat": 0.1,
         "start_radius": (1.0, 1.3), "radius_scale": 1.0},
    ],
}
# The texture fades out inside this radius band so the goal neighborhood
# stays linear and every policy that reaches it can finish.
TEXTURE_GATE = (0.2, 0.5)
# Episodes start in a narrow cone of directions: expert trajectories then
# trace one corridor to the goal, and a sloppy clone that drifts off the
# corridor finds itself in texture it has no labels for. The cone axis and
# radius band are per-task parameters; farther starts mean a longer corridor
# through more texture, which is the main thing that makes a task demand
# more demonstrations.
START_SPREAD = 1.2


def sample_starts(
    rng: np.random.Generator,
    count: int,
    dim: int,
    center: np.ndarray,
    radius: tuple[float, float],
) -> np.ndarray:
    directions = center + START_SPREAD * rng.normal(0.0, 1.0, (count, dim))
    directions /= np.linalg.norm(directions, axis=1, keepdims=True)
    radii = rng.uniform(radius[0], radius[1], (count, 1))
    return directions * radii


class ExpertInvalidError(RuntimeError):
    """A generated expert failed the goal-reaching check after all retries."""


@dataclass(frozen=True)
class SuiteConfig:
    num_tasks: int
    profile: str = "three-tier"
    seed: int = 7
    state_dim: int = 4
    horizon: int = 25
    success_radius: float = 0.1
    process_noise: float = 0.01


@dataclass(frozen=True)
class SynthTaskSpec:
    task_id: int
    tier: str
    state_dim: int
    dynamics_gain: float
    expert_gain: np.ndarray
    expert_bias: np.ndarray
    texture_in: np.ndarray  # (features, state_dim)
    texture_phase: np.ndarray  # (features,)
    texture_out: np.ndarray  # (state_dim, features), scale folded in
    moat: float  # outward radial field strength; a barrier until cancelled
    start_center: np.ndarray  # unit vector, cone axis of the start states
    start_radius: tuple[float, float]
    observation_noise_std: float
    horizon: int
    success_radius: float

    @property
    def drift(self) -> np.ndarray:
        # The dynamics drift is minus the expert bias, so the expert cancels it.
        return -self.expert_bias

    def texture_field(self, states: np.ndarray) -> np.ndarray:
        """Nonlinear dynamics field at a batch of states, gated off near the goal.

        The field is a smooth random flow plus an outward radial moat. A
        policy that has not learned to cancel it is pushed back out of the
        annulus around the goal, so success stays near zero until the field
        is genuinely fit rather than luckily traversed.
        """
        features = np.tanh(states @ self.texture_in.T + self.texture_phase)
        field = features @ self.texture_out.T
        r = np.linalg.norm(states, axis=-1, keepdims=True)
        if self.moat:
            field = field + self.moat * states / np.maximum(r, 1e-9)
        lo, hi = TEXTURE_GATE
        x = np.clip((r - lo) / (hi - lo), 0.0, 1.0)
        return field * (x * x * (3.0 - 2.0 * x))  # smoothstep gate


@dataclass(frozen=True)
class AnalyticExpert:
    """Optimal controller for one task, acting on the observed state block.

    u = -k * s + b - texture(s): the linear law contracts toward the goal
    and the texture term cancels the task's nonlinear dynamics field. The
    cancellation is exactly what a cloned policy has to learn, so texture
    strength sets how much data the task soaks up.
    """

    gains: np.ndarray
    bias: np.ndarray
    spec: SynthTaskSpec

    def __call__(self, observation: np.ndarray) -> np.ndarray:
        s = np.asarray(observation)[: self.spec.state_dim]
        return -self.gains * s + self.bias - self.spec.texture_field(s)

    def batch(self, observations: np.ndarray) -> np.ndarray:
        s = np.asarray(observations)[:, : self.spec.state_dim]
        return -self.gains * s + self.bias - self.spec.texture_field(s)


class ExpertPolicy:
    """Adapter exposing the per-task experts through the learner interface."""

    def __init__(self, experts: Sequence[AnalyticExpert]):
        self._experts = list(experts)

    def act(self, observation: np.ndarray, task_id: int) -> np.ndarray:
        return self._experts[task_id](observation)

    def act_batch(self, observations: np.ndarray, task_id: int) -> np.ndarray:
        return self._experts[task_id].batch(observations)


class SynthTaskEnv:
    """Episodic environment for one task; reset takes the episode's rng."""

    def __init__(self, spec: SynthTaskSpec, num_tasks: int, process_noise: float):
        self.spec = spec
        self.num_tasks = num_tasks
        self.process_noise = process_noise
        self._onehot = np.zeros(num_tasks)
        self._onehot[spec.task_id] = 1.0
        self._rng: np.random.Generator | None = None
        self._state: np.ndarray | None = None
        self._t = 0
        self._done = True

    def _observe(self) -> np.ndarray:
        noise = self._rng.normal(0.0, 1.0, self.spec.state_dim) * self.spec.observation_noise_std
        return np.concatenate([self._state + noise, self._onehot])

    def reset(self, rng: np.random.Generator) -> np.ndarray:
        self._rng = rng
        spec = self.spec
        self._state = sample_starts(rng, 1, spec.state_dim, spec.start_center, spec.start_radius)[0]
        self._t = 0
        self._done = False
        return self._observe()

    def step(self, action: np.ndarray) -> tuple[np.ndarray, bool, bool]:
        """Advance one step; episodes always run the full horizon.

        ``success`` flags the goal ball being hit at this step (first passage
        counts for the episode); the episode itself is fixed-length so every
        demonstration contributes the same number of samples regardless of
        how quickly the policy reaches the goal.
        """
        if self._done:
            raise RuntimeError("step() called on a finished episode; reset first")
        spec = self.spec
        w = self._rng.normal(0.0, 1.0, spec.state_dim) * self.process_noise
        self._state = (
            spec.dynamics_gain * self._state
            + np.asarray(action)
            + spec.texture_field(self._state)
            + spec.drift
            + w
        )
        self._t += 1
        success = bool(np.linalg.norm(self._state) < spec.success_radius)
        self._done = self._t >= spec.horizon
        return self._observe(), self._done, success


@dataclass(frozen=True)
class SyntheticSuite:
    config: SuiteConfig
    specs: list[SynthTaskSpec]
    envs: list[SynthTaskEnv]
    experts: list[AnalyticExpert]
    expert_success: tuple[float, ...] = field(default=())

    @property
    def num_tasks(self) -> int:
        return len(self.specs)

    @property
    def obs_dim(self) -> int:
        return self.config.state_dim + self.num_tasks

    @property
    def act_dim(self) -> int:
        return self.config.state_dim


def _tier_for(profile: str, task_index: int, num_tasks: int) -> dict:
    tiers = TIER_TABLE[profile]
    return tiers[task_index * len(tiers) // num_tasks]


def rollout_successes(
    spec: SynthTaskSpec,
    num_tasks: int,
    process_noise: float,
    policy_batch,
    episodes: int,
    rng: np.random.Generator,
) -> int:
    """Simulate ``episodes`` rollouts of one task in a batch; count successes.

    Same dynamics and first-passage success rule as SynthTaskEnv, vectorized
    over episodes so evaluation and suite validation stay cheap.
    """
    d = spec.state_dim
    states = sample_starts(rng, episodes, d, spec.start_center, spec.start_radius)
    onehot = np.zeros((episodes, num_tasks))
    onehot[:, spec.task_id] = 1.0
    alive = np.ones(episodes, dtype=bool)
    succeeded = np.zeros(episodes, dtype=bool)
    for _ in range(spec.horizon):
        obs_noise = rng.normal(0.0, 1.0, (episodes, d)) * spec.observation_noise_std
        obs = np.concatenate([states + obs_noise, onehot], axis=1)
        actions = policy_batch(obs)
        w = rng.normal(0.0, 1.0, (episodes, d)) * process_noise
        states = (
            spec.dynamics_gain * states + actions + spec.texture_field(states) + spec.drift + w
        )
        hit = (np.linalg.norm(states, axis=1) < spec.success_radius) & alive
        succeeded |= hit
        alive &= ~hit
        if not alive.any():
            break
    return int(succeeded.sum())


def _draw_task(config: SuiteConfig, task_id: int, attempt: int) -> tuple[SynthTaskSpec, AnalyticExpert]:
    tier = _tier_for(config.profile, task_id, config.num_tasks)
    d = config.state_dim
    if config.profile == "identical":
        rng = substream(config.seed, SUITE, 0, attempt)  # shared draw: tasks must match exactly
    else:
        rng = substream(config.seed, SUITE, task_id, attempt)
    gain_jitter = rng.uniform(-0.02, 0.02, d)
    # retries strengthen the contraction and soften the texture
    closed_loop = tier["closed_loop"] * (0.85**attempt)
    texture_gain = tier["texture"] * (0.7**attempt)
    gains = (tier["dynamics_gain"] - closed_loop) + gain_jitter
    bias = rng.uniform(-0.4, 0.4, d)
    center = rng.normal(0.0, 1.0, d)
    center /= np.linalg.norm(center)
    m = tier["features"]
    t_in = rng.normal(0.0, tier["frequency"] / np.sqrt(d), (m, d))
    t_phase = rng.uniform(-1.0, 1.0, m)
    t_out = rng.normal(0.0, 1.0, (d, m))
    # normalize so the field's RMS norm along the task's corridor equals texture_gain
    probe = sample_starts(rng, 256, d, center, tier["start_radius"]) \
        * rng.uniform(0.4, 1.0, (256, 1))
    raw = np.tanh(probe @ t_in.T + t_phase) @ t_out.T
    rms = float(np.sqrt(np.mean(np.sum(raw**2, axis=1))))
    t_out *= texture_gain / max(rms, 1e-9)
    spec = SynthTaskSpec(
        task_id=task_id,
        tier=tier["name"],
        state_dim=d,
        dynamics_gain=tier["dynamics_gain"],
        expert_gain=gains,
        expert_bias=bias,
        texture_in=t_in,
        texture_phase=t_phase,
        texture_out=t_out,
        moat=tier["moat"] * (0.8**attempt),
        start_center=center,
        start_radius=tuple(tier["start_radius"]),
        observation_noise_std=tier["noise_std"],
        horizon=config.horizon,
        success_radius=config.success_radius * tier["radius_scale"],
    )
    return spec, AnalyticExpert(gains=gains, bias=bias, spec=spec)


def build_suite(config: SuiteConfig) -> SyntheticSuite:
    """Deterministically construct and validate the task suite.

    Every expert must reach the goal in at least 99% of Monte-Carlo episodes
    under its own task's noise; failing tasks are regenerated with a harder
    contraction up to a retry limit.
    """
    if config.num_tasks < 1:
        raise ValueError(f"num_tasks must be >= 1, got {config.num_tasks}")
    if config.profile not in TIER_TABLE:
        raise ValueError(f"unknown difficulty profile {config.profile!r}")
    if config.horizon < 1 or config.success_radius <= 0 or config.state_dim < 1:
        raise ValueError("horizon, success_radius and state_dim must be positive")

    specs: list[SynthTaskSpec] = []
    experts: list[AnalyticExpert] = []
    rates: list[float] = []
    for tid in range(config.num_tasks):
        for attempt in range(EXPERT_BUILD_ATTEMPTS):
            spec, expert = _draw_task(config, tid, attempt)
            val_rng = substream(config.seed, SUITE, tid, attempt, 1)
            wins = rollout_successes(
                spec,
                config.num_tasks,
                config.process_noise,
                expert.batch,
                EXPERT_VALIDATION_EPISODES,
                val_rng,
            )
            rate = wins / EXPERT_VALIDATION_EPISODES
            if rate >= EXPERT_SUCCESS_FLOOR:
                specs.append(spec)
                experts.append(expert)
                rates.append(rate)
                break
        else:
            raise ExpertInvalidError(
                f"task {tid}: expert below {EXPERT_SUCCESS_FLOOR:.0%} success "
                f"after {EXPERT_BUILD_ATTEMPTS} attempts"
            )
    envs = [SynthTaskEnv(spec, config.num_tasks, config.process_noise) for spec in specs]
    return SyntheticSuite(
        config=config, specs=specs, envs=envs, experts=experts, expert_success=tuple(rates)
    )


def evaluate_policy(
    learner,
    suite: SyntheticSuite,
    episodes_per_task: int,
    rng: np.random.Generator,
) -> np.ndarray:
    """Pure-policy success rate per task, for reporting curves only.

    The scheduler never sees these numbers; it works from rates measured
    during data collection.
    """
    if episodes_per_task < 1:
        raise ValueError(f"episodes_per_task must be >= 1, got {episodes_per_task}")
    rates = np.zeros(suite.num_tasks)
    for tid, spec in enumerate(suite.specs):
        if hasattr(learner, "act_batch"):
            policy = lambda obs, _tid=tid: learner.act_batch(obs, _tid)
        else:
            policy = lambda obs, _tid=tid: np.stack([learner.act(o, _tid) for o in obs])
        wins = rollout_successes(
            spec, suite.num_tasks, suite.config.process_noise, policy, episodes_per_task, rng
        )
        rates[tid] = wins / episodes_per_task
    return rates


def describe_rows(suite: SyntheticSuite) -> list[dict]:
    """Per-task summary used by the `suite describe` command."""
    rows = []
    for spec, rate in zip(suite.specs, suite.expert_success):
        rows.append(
            {
                "task": spec.task_id,
                "tier": spec.tier,
                "dynamics_gain": spec.dynamics_gain,
                "mean_ctrl_gain": float(np.mean(spec.expert_gain)),
                "obs_noise_std": spec.observation_noise_std,
                "horizon": spec.horizon,
                "success_radius": spec.success_radius,
                "expert_success": rate,
            }
        )
    return rows
