import numpy as np
import pytest

from mtdagger.kalman import kf_init
from mtdagger.scheduler import (
    AllocationPlan,
    InfeasibleBudgetError,
    SchedulerMode,
    SchedulerParams,
    compute_gain,
    compute_need,
    rank_normalize,
    schedule_round,
    softmax_allocate,
    softmax_probabilities,
    uniform_plan,
    uniform_split,
)

from helpers import allocation_l1_optimum


def test_compute_need():
    assert compute_need(0.754545) == pytest.approx(0.245455)
    assert compute_need(1.0) == 0.0
    assert compute_need(0.0) == 1.0
    with pytest.raises(ValueError):
        compute_need(1.2)


def test_compute_gain():
    assert compute_gain(1.2, 0.8) == pytest.approx(0.4)
    assert compute_gain(0.5, 0.7) == 0.0
    assert compute_gain(0.3, 0.3) == 0.0
    with pytest.raises(ValueError):
        compute_gain(float("nan"), 0.1)
    with pytest.raises(ValueError):
        compute_gain(-0.1, 0.1)


def test_rank_normalize_examples():
    assert rank_normalize([0.2, 0.9, 0.5]) == [0.0, 1.0, 0.5]
    assert rank_normalize([0.42]) == [0.0]
    # ties break toward the lower task index
    assert rank_normalize([0.3, 0.3, 0.7]) == [0.0, 0.5, 1.0]


def test_rank_normalize_rejects_bad_input():
    with pytest.raises(ValueError):
        rank_normalize([])
    with pytest.raises(ValueError):
        rank_normalize([0.1, float("inf")])


def test_rank_normalize_range_and_extremes():
    rng = np.random.default_rng(3)
    for _ in range(500):
        n = int(rng.integers(2, 40))
        values = rng.normal(0, 10, n)
        out = np.asarray(rank_normalize(values))
        assert out.min() == 0.0 and out.max() == 1.0
        assert np.all((out >= 0) & (out <= 1))
        assert out[np.argmin(values)] == 0.0
        assert out[np.argmax(values)] == 1.0


def test_rank_normalize_monotone_transform_invariance():
    rng = np.random.default_rng(4)
    transforms = [lambda x: 10 * x, lambda x: x**3, np.exp]
    for _ in range(300):
        n = int(rng.integers(1, 30))
        values = rng.normal(0, 2, n)
        base = rank_normalize(values)
        for f in transforms:
            assert rank_normalize(f(values)) == base


def test_uniform_split_remainder_to_low_indices():
    assert uniform_split(108, 36) == [3] * 36
    assert uniform_split(10, 4) == [3, 3, 2, 2]


def test_softmax_allocate_symmetric():
    plan = softmax_allocate([0.0, 0.0, 0.0], 0.5, 9, 1)
    assert plan.counts == (3, 3, 3)


def test_softmax_allocate_worked_example():
    plan = softmax_allocate([0.0, 0.5, 1.0], 0.5, 108, 1)
    # probabilities are softmax([0, 1, 2]); checked against direct evaluation
    z = np.exp([0.0, 1.0, 2.0])
    expected = z / z.sum()
    assert np.allclose(plan.probabilities, expected, rtol=1e-12)
    assert np.allclose(expected, [0.090031, 0.244728, 0.665241], atol=5e-7)
    assert plan.counts == (10, 26, 72)


def test_softmax_allocate_floor_redistribution():
    plan = softmax_allocate([0.0, 1.0], 0.5, 10, 4)
    assert plan.counts == (4, 6)


def test_softmax_allocate_infeasible():
    with pytest.raises(InfeasibleBudgetError):
        softmax_allocate([0.1, 0.2, 0.3], 0.5, 5, 2)


def test_softmax_allocate_rejects_bad_temperature():
    with pytest.raises(ValueError):
        softmax_allocate([0.1], 0.0, 5, 1)


def test_allocation_plan_invariants_enforced():
    with pytest.raises(ValueError):
        AllocationPlan(counts=(1, 2), budget=4, min_per_task=0)
    with pytest.raises(ValueError):
        AllocationPlan(counts=(0, 4), budget=4, min_per_task=1)


def test_allocation_sums_to_budget_randomized():
    rng = np.random.default_rng(5)
    for _ in range(400):
        n = int(rng.integers(1, 65))
        n_min = int(rng.integers(0, 3))
        budget = int(rng.integers(max(n * n_min, 1), 10_000))
        scores = rng.uniform(0, 1, n)
        temperature = float(rng.uniform(0.05, 5.0))
        plan = softmax_allocate(scores, temperature, budget, n_min)
        assert sum(plan.counts) == budget
        assert min(plan.counts) >= n_min


def test_allocation_monotone_in_metric():
    rng = np.random.default_rng(6)
    params = SchedulerParams(temperature=0.5, budget=100, min_per_task=1)
    for _ in range(200):
        n = int(rng.integers(2, 20))
        metrics = rng.uniform(0, 1, n)
        if len(np.unique(metrics)) < n:
            continue
        plan = schedule_round(SchedulerMode.PERFORMANCE_GAIN, [], metrics, params)
        order = np.argsort(-metrics)
        counts = np.asarray(plan.counts)[order]
        assert np.all(np.diff(counts) <= 0)


def test_temperature_limits():
    scores = rank_normalize([0.1, 0.4, 0.6, 0.9])
    hot = softmax_allocate(scores, 100.0, 100, 1)
    assert max(hot.counts) - min(hot.counts) <= 1
    cold = softmax_allocate(scores, 0.001, 100, 1)
    assert cold.counts[3] == 100 - 3 * 1
    assert cold.counts[:3] == (1, 1, 1)


def test_matches_brute_force_l1_optimum():
    rng = np.random.default_rng(7)
    for _ in range(300):
        n = int(rng.integers(1, 6))
        n_min = int(rng.integers(0, 3))
        budget = int(rng.integers(max(n * n_min, 1), 31))
        scores = rng.uniform(0, 1, n)
        plan = softmax_allocate(scores, 0.5, budget, n_min)
        best, _ = allocation_l1_optimum(plan.probabilities, budget, n_min)
        mine = float(np.abs(np.asarray(plan.counts) - np.asarray(plan.probabilities) * budget).sum())
        assert mine <= best + 1e-9


def test_schedule_round_uniform():
    plan = schedule_round(
        SchedulerMode.UNIFORM, [0.5] * 36, [], SchedulerParams(0.5, 108, 1)
    )
    assert plan.counts == tuple([3] * 36)
    assert plan.probabilities == tuple([1 / 36] * 36)


def test_schedule_round_task_need_composition():
    params = SchedulerParams(0.5, 108, 1)
    states = [kf_init(e, 0.1) for e in (0.9, 0.5, 0.1)]
    plan = schedule_round(SchedulerMode.TASK_NEED, states, [0, 0, 0], params)
    assert plan.counts == (10, 26, 72)
    assert plan.raw_metrics == pytest.approx((0.1, 0.5, 0.9))


def test_schedule_round_accepts_plain_floats():
    params = SchedulerParams(0.5, 108, 1)
    plan = schedule_round(SchedulerMode.TASK_NEED, [0.9, 0.5, 0.1], [0, 0, 0], params)
    assert plan.counts == (10, 26, 72)


def test_schedule_round_equal_gains_follow_tie_rule():
    # equal metrics are ranked by index, so the split is deliberately not equal
    params = SchedulerParams(0.5, 108, 1)
    plan = schedule_round(SchedulerMode.PERFORMANCE_GAIN, [], [1.0, 1.0, 1.0], params)
    assert plan.counts == (10, 26, 72)


def test_uniform_plan_respects_floor():
    with pytest.raises(InfeasibleBudgetError):
        uniform_plan(10, 4, 3)
    plan = uniform_plan(12, 4, 3)
    assert plan.counts == (3, 3, 3, 3)


def test_probabilities_are_stable_under_shift():
    scores = [5.0, 6.0, 7.0]
    shifted = [0.0, 1.0, 2.0]
    assert np.allclose(
        softmax_probabilities(scores, 0.5), softmax_probabilities(shifted, 0.5)
    )
