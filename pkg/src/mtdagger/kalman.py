"""Per-task success-rate tracking with a scalar Kalman filter.

The learner's true success probability on a task is treated as a slowly
drifting hidden scalar. Raw rates measured from a handful of rollouts are
noisy, so each round the filter blends the new measurement with the running
estimate. The measurement noise shrinks with the number of rollouts behind
the measurement, so rates backed by more episodes move the estimate more.
"""

from __future__ import annotations

from dataclasses import dataclass


class OutOfRangeError(ValueError):
    """A probability or variance argument is outside its domain."""


@dataclass(frozen=True)
class KalmanState:
    """Filtered success-probability estimate and its variance."""

    estimate: float
    variance: float


@dataclass(frozen=True)
class FilterParams:
    """Process noise added per predict step and the base measurement noise."""

    process_noise: float = 0.03
    base_measurement_noise: float = 0.5

    def __post_init__(self) -> None:
        if self.process_noise < 0.0:
            raise OutOfRangeError(f"process_noise must be >= 0, got {self.process_noise}")
        if self.base_measurement_noise <= 0.0:
            raise OutOfRangeError(
                f"base_measurement_noise must be > 0, got {self.base_measurement_noise}"
            )


@dataclass(frozen=True)
class SuccessMeasurement:
    """Raw success rate over ``rollout_count`` episodes of one task."""

    raw_rate: float
    rollout_count: int

    def __post_init__(self) -> None:
        if not 0.0 <= self.raw_rate <= 1.0:
            raise OutOfRangeError(f"raw_rate must be in [0, 1], got {self.raw_rate}")
        if self.rollout_count < 0:
            raise OutOfRangeError(f"rollout_count must be >= 0, got {self.rollout_count}")


def kf_init(prior_estimate: float = 0.5, prior_variance: float = 0.25) -> KalmanState:
    """Fresh filter state from an optimistic-agnostic prior."""
    if not 0.0 <= prior_estimate <= 1.0:
        raise OutOfRangeError(f"prior_estimate must be in [0, 1], got {prior_estimate}")
    if prior_variance <= 0.0:
        raise OutOfRangeError(f"prior_variance must be > 0, got {prior_variance}")
    return KalmanState(float(prior_estimate), float(prior_variance))


def measurement_noise(params: FilterParams, rollout_count: int) -> float:
    """Adaptive measurement noise; more rollouts mean a more trusted rate."""
    return params.base_measurement_noise / (rollout_count + 1)


def kf_gain(prior_variance: float, params: FilterParams, rollout_count: int) -> float:
    """Kalman gain after the predict step; always in (0, 1) for valid inputs."""
    p_pred = prior_variance + params.process_noise
    r = measurement_noise(params, rollout_count)
    return p_pred / (p_pred + r)


def kf_update(state: KalmanState, params: FilterParams, meas: SuccessMeasurement) -> KalmanState:
    """One predict/update cycle against a raw success-rate measurement.

    Predict inflates the variance by the process noise; update corrects the
    estimate toward the measurement with the Kalman gain and contracts the
    variance. The estimate is clamped to [0, 1] afterwards: the Gaussian
    filter does not know the state is a probability, and downstream
    scheduling needs 1 - estimate to stay a valid need score.
    """
    p_pred = state.variance + params.process_noise
    gain = kf_gain(state.variance, params, meas.rollout_count)
    estimate = state.estimate + gain * (meas.raw_rate - state.estimate)
    estimate = min(1.0, max(0.0, estimate))
    return KalmanState(estimate, (1.0 - gain) * p_pred)
