"""Expert-labeled sample storage.

The aggregated dataset is append-only: each DAgger round unions its freshly
relabeled samples into the pool and nothing is ever evicted. Per-task views
are kept so training can report per-task losses cheaply.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Iterable

import numpy as np


class EmptyDatasetError(ValueError):
    """Training was requested on a dataset with no samples."""


class EmptyTaskDataError(ValueError):
    """A task that must have data has none."""


@dataclass(frozen=True)
class LabeledSample:
    """One (observation, expert action) pair for a task.

    The action is always the expert's output for this observation, no matter
    which action was actually executed during collection.
    """

    observation: np.ndarray
    expert_action: np.ndarray
    task_id: int


class AggregatedDataset:
    """Append-only pool of expert-labeled samples across tasks and rounds."""

    def __init__(self, num_tasks: int):
        if num_tasks < 1:
            raise ValueError("need at least one task")
        self.num_tasks = num_tasks
        self._obs: list[list[np.ndarray]] = [[] for _ in range(num_tasks)]
        self._act: list[list[np.ndarray]] = [[] for _ in range(num_tasks)]
        self._counts = np.zeros(num_tasks, dtype=int)
        self._stacked: tuple[np.ndarray, np.ndarray, np.ndarray] | None = None

    def __len__(self) -> int:
        return int(self._counts.sum())

    @property
    def per_task_counts(self) -> tuple[int, ...]:
        return tuple(int(c) for c in self._counts)

    def extend(self, samples: Iterable[LabeledSample]) -> int:
        """Append samples; returns how many were added."""
        added = 0
        for s in samples:
            if not 0 <= s.task_id < self.num_tasks:
                raise ValueError(f"task_id {s.task_id} outside [0, {self.num_tasks})")
            self._obs[s.task_id].append(np.asarray(s.observation, dtype=float))
            self._act[s.task_id].append(np.asarray(s.expert_action, dtype=float))
            self._counts[s.task_id] += 1
            added += 1
        if added:
            self._stacked = None
        return added

    def task_arrays(self, task_id: int) -> tuple[np.ndarray, np.ndarray]:
        """(observations, expert actions) stacked for one task."""
        if self._counts[task_id] == 0:
            raise EmptyTaskDataError(f"task {task_id} has no samples")
        return np.stack(self._obs[task_id]), np.stack(self._act[task_id])

    def arrays(self) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        """(observations, expert actions, task ids) over the whole pool.

        Rows are grouped by ascending task id; the stack is cached until the
        next extend, so one rebuild per round.
        """
        if len(self) == 0:
            raise EmptyDatasetError("dataset is empty")
        if self._stacked is None:
            xs, ys, ts = [], [], []
            for tid in range(self.num_tasks):
                if self._counts[tid] == 0:
                    continue
                xs.append(np.stack(self._obs[tid]))
                ys.append(np.stack(self._act[tid]))
                ts.append(np.full(self._counts[tid], tid, dtype=int))
            self._stacked = (np.vstack(xs), np.vstack(ys), np.concatenate(ts))
        return self._stacked
