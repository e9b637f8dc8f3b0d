"""Budget-aware multitask DAgger simulator.

A shared policy is distilled from per-task analytic experts by iterative
imitation; a performance-aware scheduler splits each round's demonstration
budget across tasks using either a Kalman-filtered task-need signal or the
per-task training-loss gain.
"""

__version__ = "0.1.0"

from .config import ExperimentConfig, parse_config, serialize_config  # noqa: E402,F401
from .kalman import FilterParams, KalmanState, SuccessMeasurement, kf_init, kf_update  # noqa: F401
from .scheduler import (  # noqa: F401
    AllocationPlan,
    SchedulerMode,
    SchedulerParams,
    rank_normalize,
    schedule_round,
    softmax_allocate,
)
from .suite import SuiteConfig, build_suite, evaluate_policy  # noqa: F401
