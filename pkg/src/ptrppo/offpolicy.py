"""Importance ratios for replayed trajectories: per-step, done-aware cumulative, truncated."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

RATIO_MIN = 1e-4
RATIO_MAX = 1e4


@dataclass(frozen=True)
class RatioBatch:
    step_ratios: np.ndarray
    cumulative: np.ndarray
    truncated: np.ndarray


def step_ratio(current_prob, behavior_prob, ratio_min: float = RATIO_MIN, ratio_max: float = RATIO_MAX):
    """current / behavior, clamped to ``[ratio_min, ratio_max]``. Works on scalars and arrays."""
    cur = np.asarray(current_prob, dtype=np.float64)
    beh = np.asarray(behavior_prob, dtype=np.float64)
    if np.any(beh <= 0):
        raise ValueError("behavior probability must be positive")
    out = np.clip(cur / beh, ratio_min, ratio_max)
    return float(out) if out.ndim == 0 else out


def cumulative_ratio(step_ratios, dones) -> np.ndarray:
    """rho_t = ratio_t * (d_t + (1 - d_t) * rho_{t+1}), with rho past the segment end equal to 1.

    The product therefore runs from t to the first done at or after t, or to
    the segment end when there is none.
    """
    r = np.asarray(step_ratios, dtype=np.float64)
    d = np.asarray(dones, dtype=np.float64)
    if r.shape != d.shape:
        raise ValueError(f"length mismatch: {r.shape} vs {d.shape}")
    out = np.empty_like(r)
    nxt = 1.0
    for t in range(len(r) - 1, -1, -1):
        nxt = r[t] * (d[t] + (1.0 - d[t]) * nxt)
        out[t] = nxt
    return out


def truncate(rho, eps_marg: float = 0.2):
    """min(1 - eps, rho) + [(rho - (1 - eps)) / rho]_+ , elementwise."""
    rho = np.asarray(rho, dtype=np.float64)
    if np.any(rho <= 0):
        raise ValueError("truncate expects positive ratios")
    c = 1.0 - eps_marg
    out = np.minimum(c, rho) + np.maximum((rho - c) / rho, 0.0)
    return float(out) if out.ndim == 0 else out


def corrected_advantages(advantages_done, truncated) -> np.ndarray:
    a = np.asarray(advantages_done, dtype=np.float64)
    w = np.asarray(truncated, dtype=np.float64)
    if a.shape != w.shape:
        raise ValueError(f"length mismatch: {a.shape} vs {w.shape}")
    return w * a


def ratio_batch(current_probs, behavior_probs, dones, eps_marg: float = 0.2,
                ratio_min: float = RATIO_MIN, ratio_max: float = RATIO_MAX) -> RatioBatch:
    steps = np.atleast_1d(step_ratio(current_probs, behavior_probs, ratio_min, ratio_max))
    cum = cumulative_ratio(steps, dones)
    return RatioBatch(steps, cum, np.atleast_1d(truncate(cum, eps_marg)))
