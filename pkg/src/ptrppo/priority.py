"""Trajectory priority measures: max |A|, mean |A|, and normalized segment return."""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import NamedTuple

import numpy as np

PRIORITY_EPS = 1e-6
SCHEMES = ("max", "mean", "reward")


class TrajectoryPriority(NamedTuple):
    value: float
    scheme: str

    def __float__(self) -> float:
        return float(self.value)


@dataclass(frozen=True)
class RunningReturnStats:
    """Welford accumulator: ``m2`` is the running sum of squared deviations."""

    count: int = 0
    mean: float = 0.0
    m2: float = 0.0

    def update(self, x: float) -> "RunningReturnStats":
        count = self.count + 1
        delta = x - self.mean
        mean = self.mean + delta / count
        return RunningReturnStats(count, mean, self.m2 + delta * (x - mean))

    @property
    def std(self) -> float:
        """Population standard deviation, 0 when fewer than one sample."""
        return math.sqrt(self.m2 / self.count) if self.count else 0.0


def _abs_advantages(advantages) -> np.ndarray:
    a = np.abs(np.asarray(advantages, dtype=np.float64))
    if a.size == 0:
        raise ValueError("priority of an empty trajectory is undefined")
    return a


def max_priority(advantages, eps: float = PRIORITY_EPS) -> TrajectoryPriority:
    return TrajectoryPriority(float(_abs_advantages(advantages).max()) + eps, "max")


def mean_priority(advantages, eps: float = PRIORITY_EPS) -> TrajectoryPriority:
    return TrajectoryPriority(float(_abs_advantages(advantages).mean()) + eps, "mean")


def reward_priority(undiscounted_return: float, stats: RunningReturnStats, first_insertion: bool,
                    eps: float = PRIORITY_EPS) -> tuple[TrajectoryPriority, RunningReturnStats]:
    """|(R - mean) / std| + eps, using statistics that include R on first insertion.

    Later refreshes of the same trajectory pass ``first_insertion=False`` and
    reuse the current statistics unchanged. With fewer than two returns seen,
    or zero spread, the priority is ``eps + 1``.
    """
    if first_insertion:
        stats = stats.update(float(undiscounted_return))
    sigma = stats.std
    if stats.count < 2 or sigma == 0.0:
        return TrajectoryPriority(eps + 1.0, "reward"), stats
    z = abs((undiscounted_return - stats.mean) / sigma)
    return TrajectoryPriority(z + eps, "reward"), stats


def advantage_priority(scheme: str, advantages, eps: float = PRIORITY_EPS) -> TrajectoryPriority:
    if scheme == "max":
        return max_priority(advantages, eps)
    if scheme == "mean":
        return mean_priority(advantages, eps)
    raise ValueError(f"scheme {scheme!r} is not advantage-based")
