"""Training objectives with per-example derivatives for :func:`approximator.backward`.

Every term is a batch mean of per-example losses. The accompanying signals are
the per-example derivatives (not divided by the batch size); ``backward``
does the averaging. Objectives the algorithm maximizes (surrogate, entropy)
enter with a minus sign so that ``total`` is always minimized::

    total = value_coef * value_loss + policy_loss - beta * entropy
    policy_loss = -mean(min(r * A, clip(r, 1 - eps, 1 + eps) * A))
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np


@dataclass(frozen=True)
class LossTerm:
    value: float
    dlogits: np.ndarray | None = None  # (B, A)
    dvalue: np.ndarray | None = None  # (B,)


@dataclass(frozen=True)
class LossBreakdown:
    value_loss: float
    policy_loss: float
    entropy: float
    total: float
    dlogits: np.ndarray | None
    dvalue: np.ndarray | None


def clip(x, lo, hi):
    if lo > hi:
        raise ValueError("clip bounds out of order")
    return np.minimum(np.maximum(x, lo), hi)


def _value_term(values, targets, weights) -> LossTerm:
    v = np.asarray(values, dtype=np.float64)
    err = v - np.asarray(targets, dtype=np.float64)
    return LossTerm(float(np.mean(weights * err**2)), dvalue=2.0 * weights * err)


def value_loss_on(values, targets) -> LossTerm:
    """Mean squared error against fixed TD targets r + gamma * (1 - d) * V(s')."""
    return _value_term(values, targets, 1.0)


def value_loss_off(values, targets, ratios) -> LossTerm:
    """Ratio-weighted squared TD error; the ratios are constant weights."""
    return _value_term(values, targets, np.asarray(ratios, dtype=np.float64))


def td_targets(rewards, next_values, dones, gamma: float) -> np.ndarray:
    return (np.asarray(rewards, dtype=np.float64)
            + gamma * (1.0 - np.asarray(dones, dtype=np.float64)) * np.asarray(next_values))


def policy_loss_clipped(action_probs, actions, advantages, prob_old, eps: float) -> LossTerm:
    probs = np.asarray(action_probs, dtype=np.float64)
    actions = np.asarray(actions)
    adv = np.asarray(advantages, dtype=np.float64)
    n = len(actions)
    rows = np.arange(n)
    ratio = probs[rows, actions] / np.asarray(prob_old, dtype=np.float64)
    unclipped = ratio * adv
    clipped = clip(ratio, 1.0 - eps, 1.0 + eps) * adv
    surrogate = np.minimum(unclipped, clipped)
    # gradient flows only where the unclipped branch is the active minimum
    active = unclipped <= clipped
    onehot = np.zeros_like(probs)
    onehot[rows, actions] = 1.0
    dratio = ratio[:, None] * (onehot - probs)  # d ratio / d logits
    dlogits = -(active * adv)[:, None] * dratio
    return LossTerm(float(-surrogate.mean()), dlogits=dlogits)


def surrogate_values(ratio, advantages, eps: float) -> np.ndarray:
    """Per-example clipped surrogate min(r A, clip(r) A) (the quantity being maximized)."""
    adv = np.asarray(advantages, dtype=np.float64)
    return np.minimum(ratio * adv, clip(np.asarray(ratio, dtype=np.float64), 1 - eps, 1 + eps) * adv)


def entropy_bonus(action_probs) -> LossTerm:
    """Mean entropy; ``dlogits`` is the derivative of the per-example entropy."""
    p = np.asarray(action_probs, dtype=np.float64)
    logp = np.log(np.where(p > 0, p, 1.0))
    h = -(p * logp).sum(axis=1)
    return LossTerm(float(h.mean()), dlogits=-p * (logp + h[:, None]))


def _term(x) -> LossTerm:
    return x if isinstance(x, LossTerm) else LossTerm(float(x))


def total_loss(value, policy, entropy, beta: float, value_coef: float = 1.0) -> LossBreakdown:
    """Combine terms; plain floats are accepted where no gradient is needed."""
    value, policy, entropy = _term(value), _term(policy), _term(entropy)
    total = value_coef * value.value + policy.value - beta * entropy.value
    dlogits = None
    for term, coef in ((policy, 1.0), (entropy, -beta)):
        if term.dlogits is not None:
            g = coef * term.dlogits
            dlogits = g if dlogits is None else dlogits + g
    dvalue = value_coef * value.dvalue if value.dvalue is not None else None
    return LossBreakdown(value.value, policy.value, entropy.value, total, dlogits, dvalue)
