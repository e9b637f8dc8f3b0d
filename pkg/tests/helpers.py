"""Independent oracles shared by the unit and acceptance tests.

These deliberately re-derive expected values by different means than the
library (exact fractions, brute-force enumeration, finite differences) so
they stay meaningful checks rather than mirrors of the implementation.
"""

from __future__ import annotations

from fractions import Fraction
from functools import lru_cache

import numpy as np


def kalman_oracle(estimate, variance, q, r0, raw_rate, rollouts):
    """Exact-fraction evaluation of the four filter equations."""
    est = Fraction(estimate)
    var = Fraction(variance)
    p_pred = var + Fraction(q)
    r = Fraction(r0) / (rollouts + 1)
    gain = p_pred / (p_pred + r)
    new_est = est + gain * (Fraction(raw_rate) - est)
    new_est = min(Fraction(1), max(Fraction(0), new_est))
    new_var = (1 - gain) * p_pred
    return new_est, new_var, gain, p_pred, r


@lru_cache(maxsize=None)
def _compositions(total: int, slots: int) -> np.ndarray:
    """All non-negative integer vectors of length ``slots`` summing to ``total``."""
    if slots == 1:
        return np.array([[total]], dtype=int)
    rows = []
    for first in range(total + 1):
        rest = _compositions(total - first, slots - 1)
        block = np.empty((len(rest), slots), dtype=int)
        block[:, 0] = first
        block[:, 1:] = rest
        rows.append(block)
    return np.vstack(rows)


def allocation_l1_optimum(probs, budget, min_per_task):
    """Brute-force minimum L1 distance to probs*budget over feasible plans.

    Enumerates every integer allocation >= min_per_task summing to budget;
    only usable for small N and budgets.
    """
    n = len(probs)
    free = budget - n * min_per_task
    assert free >= 0
    plans = _compositions(free, n) + min_per_task
    ideal = np.asarray(probs) * budget
    costs = np.abs(plans - ideal).sum(axis=1)
    best = costs.min()
    return float(best), plans[costs == best]


def finite_difference_grads(learner, obs, actions, task_ids, h=1e-6):
    """Central-difference gradient of the learner loss for every block."""
    grads = {}
    for name, param in learner.params.items():
        g = np.zeros_like(param)
        flat = param.reshape(-1)
        gflat = g.reshape(-1)
        for i in range(flat.size):
            orig = flat[i]
            flat[i] = orig + h
            up = learner.loss(obs, actions, task_ids)
            flat[i] = orig - h
            down = learner.loss(obs, actions, task_ids)
            flat[i] = orig
            gflat[i] = (up - down) / (2 * h)
        grads[name] = g
    return grads
