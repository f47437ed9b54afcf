"""Sumtree-backed trajectory memory with proportional sampling and FIFO overwrite."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Iterator, NamedTuple

import numpy as np


class Transition(NamedTuple):
    obs: np.ndarray
    action: int
    reward: float
    next_obs: np.ndarray
    done: bool
    behavior_prob: float


@dataclass
class Trajectory:
    """Fixed-length rollout segment stored column-wise."""

    obs: np.ndarray  # (L, obs_dim)
    actions: np.ndarray  # (L,) int
    rewards: np.ndarray  # (L,)
    next_obs: np.ndarray  # (L, obs_dim)
    dones: np.ndarray  # (L,) float 0/1
    behavior_probs: np.ndarray  # (L,)
    insertion_index: int = -1

    def __len__(self) -> int:
        return len(self.actions)

    def __iter__(self) -> Iterator[Transition]:
        for t in range(len(self)):
            yield Transition(self.obs[t], int(self.actions[t]), float(self.rewards[t]),
                             self.next_obs[t], bool(self.dones[t]), float(self.behavior_probs[t]))

    @classmethod
    def from_transitions(cls, transitions) -> "Trajectory":
        ts = list(transitions)
        return cls(
            obs=np.stack([t.obs for t in ts]).astype(np.float64),
            actions=np.array([t.action for t in ts], dtype=np.int64),
            rewards=np.array([t.reward for t in ts], dtype=np.float64),
            next_obs=np.stack([t.next_obs for t in ts]).astype(np.float64),
            dones=np.array([t.done for t in ts], dtype=np.float64),
            behavior_probs=np.array([t.behavior_prob for t in ts], dtype=np.float64),
        )

    @property
    def undiscounted_return(self) -> float:
        return float(self.rewards.sum())


class EmptyMemoryError(RuntimeError):
    pass


class StaleIndexError(KeyError):
    pass


class SumTree:
    """Array-backed complete binary tree (root at index 1, leaves at ``[n, 2n)``).

    Internal nodes are re-derived from their children on every write, so
    they always equal the sum of their children exactly.
    """

    def __init__(self, capacity: int):
        if capacity < 1:
            raise ValueError("capacity must be >= 1")
        self.capacity = int(capacity)
        n = 1
        while n < self.capacity:
            n *= 2
        self.leaf_count = n
        self.nodes = np.zeros(2 * n)

    @property
    def total(self) -> float:
        return float(self.nodes[1])

    def __getitem__(self, slot: int) -> float:
        return float(self.nodes[self.leaf_count + slot])

    def set(self, slot: int, value: float) -> None:
        if value < 0 or not np.isfinite(value):
            raise ValueError(f"leaf value must be finite and nonnegative, got {value}")
        i = self.leaf_count + slot
        self.nodes[i] = value
        i //= 2
        while i >= 1:
            self.nodes[i] = self.nodes[2 * i] + self.nodes[2 * i + 1]
            i //= 2

    def find(self, v: float) -> int:
        """Slot whose cumulative interval contains ``v`` (0 <= v < total)."""
        i = 1
        nodes = self.nodes
        while i < self.leaf_count:
            left = 2 * i
            if v < nodes[left] or nodes[left + 1] <= 0.0:
                i = left
            else:
                v -= nodes[left]
                i = left + 1
        return i - self.leaf_count

    def leaves(self) -> np.ndarray:
        return self.nodes[self.leaf_count:self.leaf_count + self.capacity].copy()


class SampleRecord(NamedTuple):
    trajectory: Trajectory
    index: int
    probability: float


class PriorityMemory:
    """Trajectory slots with leaf weights ``p ** alpha``; raw ``p`` kept for reporting."""

    def __init__(self, capacity: int, alpha: float = 0.6):
        self.tree = SumTree(capacity)
        self.alpha = float(alpha)
        self.slots: list[Trajectory | None] = [None] * capacity
        self.raw = np.zeros(capacity)
        self.write_cursor = 0
        self.inserted = 0

    @property
    def capacity(self) -> int:
        return self.tree.capacity

    def __len__(self) -> int:
        return min(self.inserted, self.capacity)

    def _weight(self, priority: float) -> float:
        # 0 ** 0 is 1 in Python; empty slots never reach here.
        return float(priority) ** self.alpha

    def insert(self, traj: Trajectory, priority) -> int:
        p = float(priority)
        if not p > 0:
            raise ValueError(f"priority must be positive, got {p}")
        slot = self.write_cursor
        traj.insertion_index = self.inserted
        self.slots[slot] = traj
        self.raw[slot] = p
        self.tree.set(slot, self._weight(p))
        self.inserted += 1
        self.write_cursor = (slot + 1) % self.capacity
        return slot

    def sample(self, count: int, rng: np.random.Generator) -> list[SampleRecord]:
        """Draw ``count`` slots with replacement, P(i) = p_i^alpha / sum_k p_k^alpha."""
        total = self.tree.total
        if len(self) == 0 or total <= 0:
            raise EmptyMemoryError("cannot sample from an empty memory")
        out = []
        for u in rng.random(count):
            slot = self.tree.find(u * total)
            out.append(SampleRecord(self.slots[slot], slot, self.tree[slot] / total))
        return out

    def update_priority(self, index: int, new_priority, insertion_index: int | None = None) -> None:
        traj = self.slots[index]
        if traj is None:
            raise StaleIndexError(f"slot {index} is empty")
        if insertion_index is not None and traj.insertion_index != insertion_index:
            raise StaleIndexError(
                f"slot {index} now holds insertion {traj.insertion_index}, not {insertion_index}")
        p = float(new_priority)
        if not p > 0:
            raise ValueError(f"priority must be positive, got {p}")
        self.raw[index] = p
        self.tree.set(index, self._weight(p))

    def priority_snapshot(self) -> np.ndarray:
        """Raw (pre-exponent) priorities in slot order; empty slots are 0."""
        return self.raw.copy()

    def insertion_indices(self) -> set[int]:
        return {t.insertion_index for t in self.slots if t is not None}
