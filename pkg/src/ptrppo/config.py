"""Run configuration and its flat ``key = value`` text format."""

from __future__ import annotations

import dataclasses
from dataclasses import dataclass, fields
from pathlib import Path

from .envs import ENVIRONMENTS
from .priority import SCHEMES


class ConfigError(ValueError):
    pass


@dataclass
class TrainConfig:
    # environment
    env: str = "gridworld"
    grid_size: int = 5
    chain_length: int = 10
    step_limit: int = 0  # 0 = environment default
    num_envs: int = 4
    # network / optimizer
    hidden_size: int = 64
    lr: float = 1e-4
    # returns and advantages
    gamma: float = 0.99
    lam: float = 0.95
    normalize_advantages: bool = False
    # losses
    clip_eps: float = 0.1
    marg_eps: float = 0.2
    entropy_coef: float = 0.001
    value_coef: float = 1.0
    ratio_min: float = 1e-4
    ratio_max: float = 1e4
    alt_truncation: str = "off"
    # replay
    rollout_len: int = 8
    memory_capacity: int = 256
    priority_scheme: str = "mean"
    alpha: float = 0.6
    priority_eps: float = 1e-6
    # schedule
    n_on_policy_epochs: int = 2
    n_off_policy_iters: int = 8
    off_batch_trajectories: int = 8
    max_iterations: int = 3125
    eval_interval: int = 1000
    eval_episodes: int = 10
    early_stop_return: float = 0.0  # stop once an evaluation reaches this; 0 disables
    seed: int = 0

    @property
    def steps_per_iteration(self) -> int:
        return self.num_envs * self.rollout_len

    def env_kwargs(self) -> dict:
        return {"grid_size": self.grid_size, "chain_length": self.chain_length,
                "step_limit": self.step_limit or None}

    def validate(self) -> "TrainConfig":
        errors = []
        if self.env not in ENVIRONMENTS:
            errors.append(f"env: unknown environment {self.env!r} (choose from {sorted(ENVIRONMENTS)})")
        if self.priority_scheme not in SCHEMES:
            errors.append(f"priority_scheme: must be one of {SCHEMES}, got {self.priority_scheme!r}")
        if self.alt_truncation != "off":
            errors.append("alt_truncation: only 'off' is supported")
        for key in ("num_envs", "hidden_size", "memory_capacity", "eval_interval", "eval_episodes",
                    "grid_size", "chain_length", "off_batch_trajectories"):
            if getattr(self, key) < 1:
                errors.append(f"{key}: must be >= 1")
        for key in ("n_on_policy_epochs", "n_off_policy_iters", "max_iterations", "step_limit"):
            if getattr(self, key) < 0:
                errors.append(f"{key}: must be >= 0")
        if self.rollout_len < 2:
            errors.append("rollout_len: must be >= 2")
        for key in ("gamma", "lam"):
            if not 0 < getattr(self, key) <= 1:
                errors.append(f"{key}: must be in (0, 1]")
        if not 0 < self.marg_eps < 1:
            errors.append("marg_eps: must be in (0, 1)")
        for key in ("lr", "clip_eps", "priority_eps", "ratio_min", "ratio_max"):
            if getattr(self, key) <= 0:
                errors.append(f"{key}: must be > 0")
        for key in ("alpha", "entropy_coef", "value_coef"):
            if getattr(self, key) < 0:
                errors.append(f"{key}: must be >= 0")
        if self.ratio_min > self.ratio_max:
            errors.append("ratio_min: must not exceed ratio_max")
        if self.n_off_policy_iters > 0 and self.memory_capacity < self.off_batch_trajectories:
            errors.append("memory_capacity: must be >= off_batch_trajectories")
        if errors:
            raise ConfigError("; ".join(errors))
        return self

    def to_text(self) -> str:
        return "".join(f"{f.name} = {_format(getattr(self, f.name))}\n" for f in fields(self))

    def replace(self, **changes) -> "TrainConfig":
        return dataclasses.replace(self, **changes)


def _format(value) -> str:
    if isinstance(value, bool):
        return "true" if value else "false"
    return repr(value) if isinstance(value, float) else str(value)


_FIELD_TYPES = {f.name: f.type for f in fields(TrainConfig)}


def coerce(key: str, raw: str):
    if key not in _FIELD_TYPES:
        raise ConfigError(f"{key}: unknown configuration key")
    kind = _FIELD_TYPES[key]
    raw = raw.strip()
    try:
        if kind == "bool":
            low = raw.lower()
            if low not in ("true", "false", "1", "0", "yes", "no", "on", "off"):
                raise ValueError(raw)
            return low in ("true", "1", "yes", "on")
        if kind == "int":
            return int(raw)
        if kind == "float":
            return float(raw)
        return raw
    except ValueError:
        raise ConfigError(f"{key}: cannot parse {raw!r} as {kind}") from None


def parse_config_text(text: str, base: TrainConfig | None = None) -> TrainConfig:
    values = {}
    for lineno, line in enumerate(text.splitlines(), 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"line {lineno}: expected 'key = value', got {line!r}")
        key, raw = (s.strip() for s in line.split("=", 1))
        values[key] = coerce(key, raw)
    return dataclasses.replace(base or TrainConfig(), **values)


def load_config(path: str | Path | None, overrides: dict[str, str] | None = None) -> TrainConfig:
    cfg = parse_config_text(Path(path).read_text()) if path else TrainConfig()
    if overrides:
        cfg = dataclasses.replace(cfg, **{k: coerce(k, str(v)) for k, v in overrides.items()})
    return cfg.validate()
