"""TD residuals and done-masked generalized advantage estimation."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np


@dataclass(frozen=True)
class AdvantageBatch:
    deltas: np.ndarray
    advantages: np.ndarray
    value_targets: np.ndarray


def compute_deltas(rewards, values, next_values, dones, gamma: float) -> np.ndarray:
    """delta_t = r_t + gamma * (1 - d_t) * V(s_{t+1}) - V(s_t)."""
    r, v, nv, d = (np.asarray(a, dtype=np.float64) for a in (rewards, values, next_values, dones))
    if not (r.shape == v.shape == nv.shape == d.shape):
        raise ValueError(f"length mismatch: {r.shape}, {v.shape}, {nv.shape}, {d.shape}")
    return r + gamma * (1.0 - d) * nv - v


def compute_gae(deltas, dones, gamma: float, lam: float) -> np.ndarray:
    """Backward recursion A_t = delta_t + gamma * lam * (1 - d_t) * A_{t+1}.

    The recursion stops at the segment end (A_T = 0) and at every done flag,
    so each episode piece inside the segment is treated independently.
    """
    delta = np.asarray(deltas, dtype=np.float64)
    d = np.asarray(dones, dtype=np.float64)
    if delta.size == 0:
        raise ValueError("compute_gae needs at least one step")
    if delta.shape != d.shape:
        raise ValueError(f"length mismatch: {delta.shape} vs {d.shape}")
    adv = np.empty_like(delta)
    running = 0.0
    decay = gamma * lam
    for t in range(len(delta) - 1, -1, -1):
        running = delta[t] + decay * (1.0 - d[t]) * running
        adv[t] = running
    return adv


def advantage_batch(rewards, values, next_values, dones, gamma: float, lam: float) -> AdvantageBatch:
    deltas = compute_deltas(rewards, values, next_values, dones, gamma)
    adv = compute_gae(deltas, dones, gamma, lam)
    return AdvantageBatch(deltas, adv, adv + np.asarray(values, dtype=np.float64))
