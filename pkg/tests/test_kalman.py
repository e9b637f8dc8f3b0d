from fractions import Fraction

import numpy as np
import pytest

from mtdagger.kalman import (
    FilterParams,
    OutOfRangeError,
    SuccessMeasurement,
    kf_gain,
    kf_init,
    kf_update,
)

from helpers import kalman_oracle

PARAMS = FilterParams(process_noise=0.03, base_measurement_noise=0.5)


def test_init_defaults():
    state = kf_init(0.5, 0.25)
    assert state.estimate == 0.5
    assert state.variance == 0.25


def test_init_passthrough():
    state = kf_init(1.0, 0.01)
    assert state.estimate == 1.0
    assert state.variance == 0.01


def test_init_rejects_out_of_range():
    with pytest.raises(OutOfRangeError):
        kf_init(1.5, 0.25)
    with pytest.raises(OutOfRangeError):
        kf_init(0.5, 0.0)
    with pytest.raises(OutOfRangeError):
        kf_init(-0.1, 0.25)


def test_params_validate():
    with pytest.raises(OutOfRangeError):
        FilterParams(process_noise=-0.1)
    with pytest.raises(OutOfRangeError):
        FilterParams(base_measurement_noise=0.0)


def test_measurement_validates():
    with pytest.raises(OutOfRangeError):
        SuccessMeasurement(1.2, 3)
    with pytest.raises(OutOfRangeError):
        SuccessMeasurement(0.5, -1)


@pytest.mark.parametrize(
    "raw, rollouts",
    [(0.8, 9), (0.0, 1), (0.5, 4), (1.0, 100), (0.3, 2)],
)
def test_update_matches_exact_fraction_oracle(raw, rollouts):
    state = kf_init(0.5, 0.25)
    out = kf_update(state, PARAMS, SuccessMeasurement(raw, rollouts))
    est, var, _, _, _ = kalman_oracle(
        Fraction(1, 2), Fraction(1, 4), Fraction(3, 100), Fraction(1, 2),
        Fraction(raw), rollouts,
    )
    assert abs(out.estimate - float(est)) <= 1e-9 * max(float(est), 1e-12)
    assert abs(out.variance - float(var)) <= 1e-9 * float(var)


def test_update_frozen_values():
    # oracle-computed expectations for the two worked measurement cases
    out = kf_update(kf_init(), PARAMS, SuccessMeasurement(0.8, 9))
    assert out.estimate == pytest.approx(float(Fraction(83, 110)), rel=1e-12)
    assert out.variance == pytest.approx(float(Fraction(7, 165)), rel=1e-12)

    out = kf_update(kf_init(), PARAMS, SuccessMeasurement(0.0, 1))
    assert out.estimate == pytest.approx(float(Fraction(25, 106)), rel=1e-12)
    assert out.variance == pytest.approx(float(Fraction(7, 53)), rel=1e-12)


def test_update_zero_innovation_keeps_estimate():
    for rollouts in (1, 5, 50):
        out = kf_update(kf_init(), PARAMS, SuccessMeasurement(0.5, rollouts))
        assert out.estimate == 0.5
        assert out.variance < 0.28


def test_variance_contracts_from_prediction():
    rng = np.random.default_rng(0)
    for _ in range(200):
        state = kf_init(rng.uniform(0, 1), rng.uniform(1e-6, 10))
        meas = SuccessMeasurement(rng.uniform(0, 1), int(rng.integers(0, 1000)))
        out = kf_update(state, PARAMS, meas)
        p_pred = state.variance + PARAMS.process_noise
        assert 0.0 < out.variance < p_pred


def test_monotone_trust_in_rollout_count():
    state = kf_init(0.5, 0.25)
    raw = 0.9
    previous_gap = None
    for n in range(1, 140, 3):
        out = kf_update(state, PARAMS, SuccessMeasurement(raw, n))
        gap = abs(out.estimate - raw)
        if previous_gap is not None:
            assert gap < previous_gap
        previous_gap = gap


def test_gain_bounds_sweep():
    for p in np.geomspace(1e-6, 10, 40):
        for n in (0, 1, 2, 5, 10, 100, 1000, 10_000):
            gain = kf_gain(float(p), PARAMS, n)
            assert 0.0 < gain < 1.0


def test_estimate_stays_clamped_over_random_sequences():
    rng = np.random.default_rng(1)
    for _ in range(30):
        state = kf_init(rng.uniform(0, 1), rng.uniform(0.01, 1.0))
        for _ in range(100):
            meas = SuccessMeasurement(float(rng.integers(0, 2)), int(rng.integers(1, 20)))
            state = kf_update(state, PARAMS, meas)
            assert 0.0 <= state.estimate <= 1.0
            assert state.variance > 0.0


def test_tracking_settles_near_true_rate():
    # With Q=0.03 the filter deliberately keeps trusting fresh measurements
    # (stationary gain ~0.55), so after 50 rounds of Bernoulli rates over 10
    # rollouts the estimate hovers around p* with a stationary std of about
    # 0.06 at the edges and 0.10 at p*=0.5. Assert the honest bands; the
    # stricter band claimed for this filter is exercised (and documented as
    # unattainable) by the acceptance suite.
    bands = {0.1: 0.15, 0.5: 0.25, 0.9: 0.15}
    for p_true, band in bands.items():
        hits = 0
        for seed in range(100):
            rng = np.random.default_rng(seed)
            state = kf_init()
            for _ in range(50):
                raw = rng.binomial(10, p_true) / 10
                state = kf_update(state, PARAMS, SuccessMeasurement(raw, 10))
            hits += abs(state.estimate - p_true) < band
        assert hits >= 95, f"p*={p_true}: {hits}/100 within {band}"
