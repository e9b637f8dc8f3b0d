import numpy as np
import pytest

from mtdagger.config import ExperimentConfig, parse_config, with_method_and_seed
from mtdagger.data import AggregatedDataset, EmptyTaskDataError, LabeledSample
from mtdagger.engine import (
    DaggerAbortedError,
    MixingSchedule,
    collect_task_data,
    make_evaluator,
    run_dagger,
    train_initial,
)
from mtdagger.kalman import FilterParams, kf_update
from mtdagger.learner import MultitaskLearner
from mtdagger.suite import (
    AnalyticExpert,
    SuiteConfig,
    SynthTaskEnv,
    SynthTaskSpec,
    SyntheticSuite,
    build_suite,
)


def small_config(**overrides) -> ExperimentConfig:
    base = dict(
        method="MTDAgger-TN",
        rounds=3,
        budget_per_round=8,
        initial_demos_per_task=2,
        eval_episodes=0,
        master_seed=0,
        suite=SuiteConfig(num_tasks=4, profile="three-tier", seed=3, horizon=8),
        learner_kind="mlp",
        train_steps=120,
        batch_size=64,
        learning_rate=0.002,
        hidden_dim=32,
        n_min=1,
    )
    base.update(overrides)
    return ExperimentConfig(**base)


def make_learner(config, suite, seed=0):
    return MultitaskLearner(
        config.learner_kind, suite.obs_dim, suite.act_dim, suite.num_tasks,
        config.encoder_dim, config.embedding_dim, config.hidden_dim,
        rng=np.random.default_rng(seed),
    )


class ScriptedEnv:
    """Fixed-length two-step episodes with a scripted success pattern."""

    def __init__(self, pattern):
        self.pattern = list(pattern)
        self.episode = -1
        self._t = 0

    def reset(self, rng):
        self.episode += 1
        self._t = 0
        return np.zeros(3)

    def step(self, action):
        self._t += 1
        done = self._t >= 2
        success = done and self.pattern[self.episode % len(self.pattern)]
        return np.zeros(3), done, success


def test_mixing_schedule_decay():
    sched = MixingSchedule(0.5, 0.5, 0.0)
    seq = [sched.epsilon]
    for _ in range(3):
        sched = sched.decayed()
        seq.append(sched.epsilon)
    assert seq == [0.5, 0.0, 0.0, 0.0]
    with pytest.raises(ValueError):
        MixingSchedule(1.2, 0.1, 0.0)


def test_collect_counts_scripted_successes():
    env = ScriptedEnv([True, True, True, False, False])
    expert = lambda obs: np.zeros(2)
    samples, meas = collect_task_data(0, None, expert, env, 5, 0.0, np.random.default_rng(0))
    assert meas.raw_rate == pytest.approx(0.6)
    assert meas.rollout_count == 5
    assert len(samples) == 10  # two steps per episode


def test_collect_zero_episodes():
    env = ScriptedEnv([True])
    samples, meas = collect_task_data(0, None, lambda o: np.zeros(2), env, 0, 0.0,
                                      np.random.default_rng(0))
    assert samples == []
    assert meas.rollout_count == 0 and meas.raw_rate == 0.0


def test_collect_pure_expert_succeeds_on_easy_task():
    suite = build_suite(SuiteConfig(num_tasks=4, seed=3, horizon=8))
    _, meas = collect_task_data(0, None, suite.experts[0], suite.envs[0], 20, 0.0,
                                np.random.default_rng(1))
    assert meas.raw_rate == 1.0


def test_collect_always_records_expert_labels():
    # epsilon=1 executes an untrained learner, yet every stored action must
    # replay as the expert's answer for the stored observation
    suite = build_suite(SuiteConfig(num_tasks=4, seed=3, horizon=8))
    tid = 3  # hard tier
    learner = MultitaskLearner("linear", suite.obs_dim, suite.act_dim, 4)
    samples, meas = collect_task_data(
        tid, learner, suite.experts[tid], suite.envs[tid], 15, 1.0, np.random.default_rng(2)
    )
    assert meas.raw_rate < 0.3
    for s in samples:
        assert np.allclose(s.expert_action, suite.experts[tid](s.observation))


def test_collect_validates_arguments():
    env = ScriptedEnv([True])
    with pytest.raises(ValueError):
        collect_task_data(0, None, lambda o: np.zeros(2), env, -1, 0.0, np.random.default_rng(0))
    with pytest.raises(ValueError):
        collect_task_data(0, None, lambda o: np.zeros(2), env, 1, 1.5, np.random.default_rng(0))


def test_train_initial_rejects_empty_tasks():
    dataset = AggregatedDataset(2)
    dataset.extend([LabeledSample(np.zeros(3), np.zeros(2), 0)])
    learner = MultitaskLearner("linear", 3, 2, 2)
    with pytest.raises(EmptyTaskDataError):
        train_initial(learner, dataset, 5, None, 0.1, np.random.default_rng(0))


def test_train_initial_converged_learner_has_zero_gain():
    rng = np.random.default_rng(3)
    w = rng.normal(size=(3, 2))
    obs = rng.normal(size=(40, 3))
    act = obs @ w
    dataset = AggregatedDataset(1)
    dataset.extend(LabeledSample(o, a, 0) for o, a in zip(obs, act))
    learner = MultitaskLearner("linear", 3, 2, 1, encoder_dim=3, embedding_dim=1)
    learner.params["head_w"][:3] = w  # exact fit up front
    start, end = train_initial(learner, dataset, 30, None, 1e-4, np.random.default_rng(0),
                               optimizer="sgd")
    assert start[0] == pytest.approx(0.0, abs=1e-20)
    assert end[0] == pytest.approx(0.0, abs=1e-12)


def test_run_dagger_zero_rounds_returns_seed_record():
    config = small_config(rounds=0)
    suite = build_suite(config.suite)
    dataset = AggregatedDataset(suite.num_tasks)
    records = run_dagger(config, suite, make_learner(config, suite), dataset=dataset)
    assert len(records) == 1
    assert records[0].round_index == 0
    assert records[0].dataset_size == len(dataset)
    assert records[0].cumulative_episodes == 4 * config.initial_demos_per_task


def test_run_dagger_uniform_equal_allocations():
    config = small_config(method="UniformDAgger", rounds=3)
    suite = build_suite(config.suite)
    records = run_dagger(config, suite, make_learner(config, suite))
    for rec in records[1:]:
        assert len(set(rec.allocation.counts)) == 1


def test_run_dagger_epsilon_sequence():
    config = small_config(rounds=4)
    suite = build_suite(config.suite)
    records = run_dagger(config, suite, make_learner(config, suite))
    assert [r.epsilon_used for r in records] == [0.0, 0.5, 0.0, 0.0, 0.0]


def test_run_dagger_dataset_growth_identity():
    config = small_config(rounds=3)
    suite = build_suite(config.suite)
    records = run_dagger(config, suite, make_learner(config, suite))
    for prev, cur in zip(records, records[1:]):
        collected = sum(m.samples_collected for m in cur.per_task)
        assert cur.dataset_size - prev.dataset_size == collected
        assert cur.cumulative_episodes - prev.cumulative_episodes == cur.allocation.budget


def test_run_dagger_measurement_lineage():
    config = small_config(rounds=4)
    suite = build_suite(config.suite)
    records = run_dagger(config, suite, make_learner(config, suite))
    params = FilterParams(config.filter_q, config.filter_r0)
    n = suite.num_tasks
    # round 1 schedules from the untouched priors
    for metrics in records[1].per_task:
        assert metrics.filtered_estimate == config.prior_estimate
        assert metrics.filtered_variance == config.prior_variance
    # round k consumes exactly round k-1's measurements
    for k in range(2, len(records)):
        for i in range(n):
            prev = records[k - 1].per_task[i]
            state = kf_update(
                type("S", (), {"estimate": prev.filtered_estimate,
                               "variance": prev.filtered_variance}),
                params, prev.raw_success,
            )
            assert records[k].per_task[i].filtered_estimate == pytest.approx(state.estimate)
            assert records[k].per_task[i].filtered_variance == pytest.approx(state.variance)


def test_run_dagger_deterministic_records():
    config = small_config(rounds=2, eval_episodes=10)
    suite = build_suite(config.suite)
    evaluator = make_evaluator(config, suite)
    run = lambda: run_dagger(config, suite, make_learner(config, suite), evaluator=evaluator)
    a, b = run(), run()
    assert len(a) == len(b)
    for ra, rb in zip(a, b):
        assert ra.allocation.counts == rb.allocation.counts
        assert ra.mean_eval_success == rb.mean_eval_success
        for ma, mb in zip(ra.per_task, rb.per_task):
            assert ma.filtered_estimate == mb.filtered_estimate
            assert ma.loss_end == mb.loss_end


def test_run_dagger_unsolvable_task_dominates_allocation():
    # one task can never succeed; from round 2 on it must hold the top rank
    config = small_config(rounds=4, budget_per_round=12)
    base = build_suite(config.suite)
    specs, envs, experts = list(base.specs), list(base.envs), list(base.experts)
    broken = SynthTaskSpec(
        task_id=1,
        tier="medium",
        state_dim=specs[1].state_dim,
        dynamics_gain=specs[1].dynamics_gain,
        expert_gain=specs[1].expert_gain,
        expert_bias=specs[1].expert_bias,
        texture_in=specs[1].texture_in,
        texture_phase=specs[1].texture_phase,
        texture_out=specs[1].texture_out,
        moat=specs[1].moat,
        start_center=specs[1].start_center,
        start_radius=specs[1].start_radius,
        observation_noise_std=specs[1].observation_noise_std,
        horizon=specs[1].horizon,
        success_radius=1e-12,
    )
    specs[1] = broken
    envs[1] = SynthTaskEnv(broken, 4, base.config.process_noise)
    experts[1] = AnalyticExpert(gains=broken.expert_gain, bias=broken.expert_bias, spec=broken)
    suite = SyntheticSuite(config=base.config, specs=specs, envs=envs, experts=experts,
                           expert_success=(1.0, 0.0, 1.0, 1.0))
    records = run_dagger(config, suite, make_learner(config, suite))
    for rec in records[2:]:
        counts = rec.allocation.counts
        assert counts[1] == max(counts)
        assert np.argmax(rec.allocation.raw_metrics) == 1


def test_run_dagger_aborts_with_partial_records():
    config = small_config(rounds=3)
    suite = build_suite(config.suite)

    class FailingEnv:
        def __init__(self, inner):
            self.inner = inner
            self.episodes = 0

        def reset(self, rng):
            self.episodes += 1
            if self.episodes > 4:  # survives the seed round and round 1
                raise RuntimeError("simulated hardware fault")
            return self.inner.reset(rng)

        def step(self, action):
            return self.inner.step(action)

    envs = list(suite.envs)
    envs[2] = FailingEnv(envs[2])
    patched = SyntheticSuite(config=suite.config, specs=suite.specs, envs=envs,
                             experts=suite.experts, expert_success=suite.expert_success)
    seen = []
    with pytest.raises(DaggerAbortedError) as info:
        run_dagger(config, patched, make_learner(config, patched), on_round=seen.append)
    assert info.value.records == seen
    assert 1 <= len(seen) < 4


def test_run_dagger_nokf_uses_raw_rates():
    config = parse_config(preset="default-12", overrides=[
        "run.rounds=3", "run.eval_episodes=0", "suite.num_tasks=6",
        "run.budget_per_round=12", "training.steps=150",
    ])
    suite = build_suite(config.suite)
    cfg_kf = with_method_and_seed(config, "MTDAgger-TN", 0)
    cfg_raw = with_method_and_seed(config, "MTDAgger-TN-noKF", 0)
    rec_kf = run_dagger(cfg_kf, suite, make_learner(cfg_kf, suite))
    rec_raw = run_dagger(cfg_raw, suite, make_learner(cfg_raw, suite))
    # the ablation's scheduling metric is one minus the raw rate from the
    # previous round, not the filtered estimate
    prev = rec_raw[1]
    expected = [1.0 - m.raw_success.raw_rate for m in prev.per_task]
    assert list(rec_raw[2].allocation.raw_metrics) == pytest.approx(expected)
    filtered = [1.0 - m.filtered_estimate for m in rec_kf[2].per_task]
    assert list(rec_kf[2].allocation.raw_metrics) == pytest.approx(filtered)
    assert list(rec_raw[2].allocation.raw_metrics) != pytest.approx(filtered)
