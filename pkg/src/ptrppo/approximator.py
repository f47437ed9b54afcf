"""Shared-trunk softmax policy / scalar value network with hand-written gradients.

Layout::

    obs -> tanh(W1 x + b1) -> tanh(W2 h1 + b2) -> logits = Wp h2 + bp
                                               -> value  = Wv h2 + bv

Everything is float64. Gradients of any loss are obtained by passing the
per-example loss derivatives with respect to the logits and the value
output to :func:`backward`; the result is averaged over the batch.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

PARAM_NAMES = ("W1", "b1", "W2", "b2", "Wp", "bp", "Wv", "bv")


class NonFiniteError(FloatingPointError):
    pass


@dataclass
class PolicyValueParams:
    arrays: dict[str, np.ndarray]

    @property
    def obs_dim(self) -> int:
        return self.arrays["W1"].shape[0]

    @property
    def action_count(self) -> int:
        return self.arrays["Wp"].shape[1]

    @property
    def hidden_size(self) -> int:
        return self.arrays["W1"].shape[1]

    def __getitem__(self, name: str) -> np.ndarray:
        return self.arrays[name]

    def copy(self) -> "PolicyValueParams":
        return PolicyValueParams({k: v.copy() for k, v in self.arrays.items()})

    def flat(self) -> np.ndarray:
        return np.concatenate([self.arrays[k].ravel() for k in PARAM_NAMES])

    def with_flat(self, vec: np.ndarray) -> "PolicyValueParams":
        out, i = {}, 0
        for k in PARAM_NAMES:
            a = self.arrays[k]
            out[k] = np.asarray(vec[i:i + a.size], dtype=np.float64).reshape(a.shape).copy()
            i += a.size
        return PolicyValueParams(out)

    def is_finite(self) -> bool:
        return all(np.all(np.isfinite(v)) for v in self.arrays.values())


# Snapshots are read-only parameter copies; forward() accepts either.
PolicySnapshot = PolicyValueParams


def _orthogonal(rng: np.random.Generator, rows: int, cols: int, gain: float) -> np.ndarray:
    a = rng.standard_normal((max(rows, cols), min(rows, cols)))
    q, r = np.linalg.qr(a)
    q = q * np.sign(np.diag(r))
    if rows < cols:
        q = q.T
    return gain * q[:rows, :cols]


def init_params(obs_dim: int, action_count: int, rng: np.random.Generator,
                hidden: int = 64) -> PolicyValueParams:
    """Orthogonal init: gain sqrt(2) on the trunk, 0.01 on the policy head, 1 on the value head."""
    g = np.sqrt(2.0)
    return PolicyValueParams({
        "W1": _orthogonal(rng, obs_dim, hidden, g), "b1": np.zeros(hidden),
        "W2": _orthogonal(rng, hidden, hidden, g), "b2": np.zeros(hidden),
        "Wp": _orthogonal(rng, hidden, action_count, 0.01), "bp": np.zeros(action_count),
        "Wv": _orthogonal(rng, hidden, 1, 1.0), "bv": np.zeros(1),
    })


def zero_params(obs_dim: int, action_count: int, hidden: int = 64) -> PolicyValueParams:
    p = init_params(obs_dim, action_count, np.random.default_rng(0), hidden)
    return PolicyValueParams({k: np.zeros_like(v) for k, v in p.arrays.items()})


@dataclass
class ForwardResult:
    action_probs: np.ndarray  # (B, A)
    value: np.ndarray  # (B,)
    logits: np.ndarray = field(repr=False)
    cache: tuple = field(repr=False)

    @property
    def log_probs(self) -> np.ndarray:
        z = self.logits - self.logits.max(axis=1, keepdims=True)
        return z - np.log(np.exp(z).sum(axis=1, keepdims=True))


def softmax(logits: np.ndarray) -> np.ndarray:
    z = logits - logits.max(axis=-1, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=-1, keepdims=True)


def forward(params: PolicyValueParams, obs: np.ndarray) -> ForwardResult:
    """Batched forward pass; a single 1-D observation is treated as a batch of one."""
    x = np.atleast_2d(np.asarray(obs, dtype=np.float64))
    if x.shape[1] != params.obs_dim:
        raise ValueError(f"observation dimension {x.shape[1]} != network input {params.obs_dim}")
    p = params.arrays
    h1 = np.tanh(x @ p["W1"] + p["b1"])
    h2 = np.tanh(h1 @ p["W2"] + p["b2"])
    logits = h2 @ p["Wp"] + p["bp"]
    value = (h2 @ p["Wv"] + p["bv"])[:, 0]
    return ForwardResult(softmax(logits), value, logits, (x, h1, h2))


def sample_action(result: ForwardResult, rng: np.random.Generator) -> tuple[np.ndarray, np.ndarray]:
    """Draw one action per row; returns ``(actions, behavior_probs)``."""
    probs = result.action_probs
    cdf = np.cumsum(probs, axis=1)
    u = rng.random(probs.shape[0]) * cdf[:, -1]
    actions = (u[:, None] >= cdf).sum(axis=1)
    actions = np.minimum(actions, probs.shape[1] - 1)
    # never pick a zero-probability action through a rounding edge
    bad = probs[np.arange(len(actions)), actions] <= 0
    if np.any(bad):
        actions[bad] = probs[bad].argmax(axis=1)
    return actions, probs[np.arange(len(actions)), actions]


def backward(params: PolicyValueParams, result: ForwardResult,
             dlogits: np.ndarray, dvalue: np.ndarray) -> dict[str, np.ndarray]:
    """Batch-mean gradient given per-example derivatives w.r.t. logits (B, A) and value (B,)."""
    x, h1, h2 = result.cache
    n = x.shape[0]
    dlogits = np.asarray(dlogits, dtype=np.float64)
    dvalue = np.asarray(dvalue, dtype=np.float64).reshape(n, 1)
    if dlogits.shape != result.logits.shape:
        raise ValueError(f"logit signal shape {dlogits.shape} != {result.logits.shape}")
    p = params.arrays
    g = {
        "Wp": h2.T @ dlogits / n, "bp": dlogits.mean(axis=0),
        "Wv": h2.T @ dvalue / n, "bv": dvalue.mean(axis=0),
    }
    dh2 = (dlogits @ p["Wp"].T + dvalue @ p["Wv"].T) * (1.0 - h2**2)
    g["W2"] = h1.T @ dh2 / n
    g["b2"] = dh2.mean(axis=0)
    dh1 = (dh2 @ p["W2"].T) * (1.0 - h1**2)
    g["W1"] = x.T @ dh1 / n
    g["b1"] = dh1.mean(axis=0)
    return g


@dataclass
class AdamState:
    lr: float = 1e-4
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    t: int = 0
    m: dict[str, np.ndarray] = field(default_factory=dict)
    v: dict[str, np.ndarray] = field(default_factory=dict)

    def copy(self) -> "AdamState":
        return AdamState(self.lr, self.beta1, self.beta2, self.eps, self.t,
                         {k: a.copy() for k, a in self.m.items()},
                         {k: a.copy() for k, a in self.v.items()})


def apply_update(params: PolicyValueParams, grad: dict[str, np.ndarray],
                 state: AdamState) -> PolicyValueParams:
    """One Adam step, in place. Raises :class:`NonFiniteError` and leaves everything untouched
    if any gradient entry is NaN or infinite."""
    for k, g in grad.items():
        if not np.all(np.isfinite(g)):
            raise NonFiniteError(f"non-finite gradient in {k}; update rejected")
    state.t += 1
    c1 = 1.0 - state.beta1**state.t
    c2 = 1.0 - state.beta2**state.t
    for k in PARAM_NAMES:
        g = grad[k]
        m = state.m.setdefault(k, np.zeros_like(g))
        v = state.v.setdefault(k, np.zeros_like(g))
        m *= state.beta1
        m += (1.0 - state.beta1) * g
        v *= state.beta2
        v += (1.0 - state.beta2) * g * g
        params.arrays[k] -= state.lr * (m / c1) / (np.sqrt(v / c2) + state.eps)
    return params


def snapshot(params: PolicyValueParams) -> PolicySnapshot:
    snap = params.copy()
    for a in snap.arrays.values():
        a.flags.writeable = False
    return snap


# Checkpoint text format:
#   line 1: "ptrppo-checkpoint 1"
#   then, for each array in PARAM_NAMES order, a header
#   "<name> <matrix|vector> <rows> <cols>" (vectors have cols = 1) followed by
#   rows*cols values, one per line, row-major, in shortest round-trip repr.
CHECKPOINT_MAGIC = "ptrppo-checkpoint 1"


def save_checkpoint(params: PolicyValueParams, path: str | Path) -> Path:
    path = Path(path)
    lines = [CHECKPOINT_MAGIC]
    for k in PARAM_NAMES:
        a = params.arrays[k]
        rows, cols = (a.shape[0], a.shape[1]) if a.ndim == 2 else (a.shape[0], 1)
        kind = "matrix" if a.ndim == 2 else "vector"
        lines.append(f"{k} {kind} {rows} {cols}")
        lines.extend(repr(float(x)) for x in a.ravel())
    path.write_text("\n".join(lines) + "\n")
    return path


def load_checkpoint(path: str | Path) -> PolicyValueParams:
    lines = Path(path).read_text().splitlines()
    if not lines or lines[0].strip() != CHECKPOINT_MAGIC:
        raise ValueError(f"{path}: not a checkpoint file")
    arrays, i = {}, 1
    for k in PARAM_NAMES:
        name, kind, rows, cols = lines[i].split()
        if name != k:
            raise ValueError(f"{path}: expected array {k}, found {name}")
        rows, cols = int(rows), int(cols)
        vals = np.array([float(s) for s in lines[i + 1:i + 1 + rows * cols]])
        if vals.size != rows * cols:
            raise ValueError(f"{path}: truncated array {k}")
        arrays[k] = vals.reshape(rows, cols) if kind == "matrix" else vals
        i += 1 + rows * cols
    return PolicyValueParams(arrays)
