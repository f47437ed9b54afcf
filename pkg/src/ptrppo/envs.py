"""Small discrete-action environments and an auto-resetting vectorized runner."""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .seeding import substream


class InvalidActionError(ValueError):
    pass


@dataclass(frozen=True)
class StepResult:
    next_obs: np.ndarray
    reward: float
    done: bool


class Environment:
    """Base class. Subclasses set ``obs_dim``, ``action_count`` and ``optimal_return``."""

    name = "base"
    obs_dim: int
    action_count: int
    optimal_return: float
    default_step_limit: int

    def __init__(self, rng: np.random.Generator | None = None, step_limit: int | None = None):
        self.rng = rng if rng is not None else np.random.default_rng()
        self.step_limit = int(step_limit) if step_limit else self.default_step_limit
        self.steps = 0
        self._needs_reset = True

    def reset(self) -> np.ndarray:
        self.steps = 0
        self._needs_reset = False
        self._reset_state()
        return self._observe()

    def step(self, action: int) -> StepResult:
        if self._needs_reset:
            raise RuntimeError(f"{self.name}: step() called before reset() or after episode end")
        if not (0 <= int(action) < self.action_count):
            raise InvalidActionError(f"{self.name}: action {action} out of range [0, {self.action_count})")
        reward, terminal = self._transition(int(action))
        self.steps += 1
        done = terminal or self.steps >= self.step_limit
        self._needs_reset = done
        return StepResult(self._observe(), float(reward), bool(done))

    def _reset_state(self) -> None:
        raise NotImplementedError

    def _transition(self, action: int) -> tuple[float, bool]:
        raise NotImplementedError

    def _observe(self) -> np.ndarray:
        raise NotImplementedError


class ChainEnv(Environment):
    """Linear chain of ``length`` cells; start at cell 0.

    Action 0 moves left (clamped at 0), action 1 moves right. Taking
    "right" in the last cell pays 1 and ends the episode; every other
    transition pays 0.
    """

    name = "chain"
    action_count = 2
    optimal_return = 1.0
    default_step_limit = 50

    LEFT, RIGHT = 0, 1

    def __init__(self, length: int = 10, rng=None, step_limit=None):
        if length < 2:
            raise ValueError("chain length must be >= 2")
        self.length = int(length)
        self.obs_dim = self.length
        super().__init__(rng, step_limit)
        self.position = 0

    def _reset_state(self):
        self.position = 0

    def _transition(self, action):
        if action == self.RIGHT:
            if self.position == self.length - 1:
                return 1.0, True
            self.position += 1
        else:
            self.position = max(self.position - 1, 0)
        return 0.0, False

    def _observe(self):
        obs = np.zeros(self.length)
        obs[self.position] = 1.0
        return obs


class GridWorldEnv(Environment):
    """``size`` x ``size`` grid, start at (0, 0), goal at (size-1, size-1).

    Actions: 0 up, 1 down, 2 left, 3 right; moves into a wall leave the agent
    in place. Entering the goal pays 1 and terminates. Observations are the
    one-hot encoding of the agent's cell (row-major).
    """

    name = "gridworld"
    action_count = 4
    optimal_return = 1.0
    default_step_limit = 50

    MOVES = ((-1, 0), (1, 0), (0, -1), (0, 1))

    def __init__(self, size: int = 5, rng=None, step_limit=None):
        if size < 2:
            raise ValueError("grid size must be >= 2")
        self.size = int(size)
        self.obs_dim = self.size * self.size
        super().__init__(rng, step_limit)
        self.row = self.col = 0

    @property
    def goal(self) -> tuple[int, int]:
        return self.size - 1, self.size - 1

    def _reset_state(self):
        self.row, self.col = 0, 0

    def _transition(self, action):
        dr, dc = self.MOVES[action]
        self.row = min(max(self.row + dr, 0), self.size - 1)
        self.col = min(max(self.col + dc, 0), self.size - 1)
        if (self.row, self.col) == self.goal:
            return 1.0, True
        return 0.0, False

    def _observe(self):
        obs = np.zeros(self.obs_dim)
        obs[self.row * self.size + self.col] = 1.0
        return obs


class CartPoleEnv(Environment):
    """Classic cart-pole balancing with Euler integration, +1 reward per step."""

    name = "cartpole"
    obs_dim = 4
    action_count = 2
    default_step_limit = 200

    gravity = 9.8
    masscart = 1.0
    masspole = 0.1
    length = 0.5  # half the pole length
    force_mag = 10.0
    tau = 0.02
    theta_threshold = 12 * 2 * math.pi / 360
    x_threshold = 2.4

    def __init__(self, rng=None, step_limit=None):
        super().__init__(rng, step_limit)
        self.state = np.zeros(4)

    @property
    def optimal_return(self) -> float:
        return float(self.step_limit)

    def _reset_state(self):
        self.state = self.rng.uniform(-0.05, 0.05, size=4)

    def _transition(self, action):
        x, x_dot, theta, theta_dot = self.state
        force = self.force_mag if action == 1 else -self.force_mag
        total_mass = self.masscart + self.masspole
        polemass_length = self.masspole * self.length
        costheta, sintheta = math.cos(theta), math.sin(theta)
        temp = (force + polemass_length * theta_dot**2 * sintheta) / total_mass
        thetaacc = (self.gravity * sintheta - costheta * temp) / (
            self.length * (4.0 / 3.0 - self.masspole * costheta**2 / total_mass)
        )
        xacc = temp - polemass_length * thetaacc * costheta / total_mass
        x += self.tau * x_dot
        x_dot += self.tau * xacc
        theta += self.tau * theta_dot
        theta_dot += self.tau * thetaacc
        self.state = np.array([x, x_dot, theta, theta_dot])
        failed = abs(x) > self.x_threshold or abs(theta) > self.theta_threshold
        return 1.0, failed

    def _observe(self):
        return self.state.copy()


ENVIRONMENTS = {"chain": ChainEnv, "gridworld": GridWorldEnv, "cartpole": CartPoleEnv}


def make_env(name: str, rng=None, *, grid_size: int = 5, chain_length: int = 10,
             step_limit: int | None = None) -> Environment:
    if name == "gridworld":
        return GridWorldEnv(grid_size, rng=rng, step_limit=step_limit)
    if name == "chain":
        return ChainEnv(chain_length, rng=rng, step_limit=step_limit)
    if name == "cartpole":
        return CartPoleEnv(rng=rng, step_limit=step_limit)
    raise ValueError(f"unknown environment {name!r}; expected one of {sorted(ENVIRONMENTS)}")


def reset(env: Environment) -> np.ndarray:
    return env.reset()


def step(env: Environment, action: int) -> StepResult:
    return env.step(action)


class VecEnv:
    """N independent environments stepped together, resetting on done.

    ``obs`` always holds the observation each member will act on next. When a
    member finishes, the returned :class:`StepResult` still carries the
    terminal observation and ``done=True`` while ``obs`` already holds the
    fresh reset observation.
    """

    def __init__(self, envs: Sequence[Environment]):
        if not envs:
            raise ValueError("VecEnv needs at least one environment")
        self.envs = list(envs)
        self.obs = np.stack([e.reset() for e in self.envs])
        self.step_counters = np.zeros(len(self.envs), dtype=np.int64)
        self._episode_returns = np.zeros(len(self.envs))
        self.completed_returns: list[float] = []

    @classmethod
    def make(cls, name: str, num_envs: int, seed: int, **env_kwargs) -> "VecEnv":
        return cls([make_env(name, substream(seed, f"env.{i}"), **env_kwargs) for i in range(num_envs)])

    @property
    def num_envs(self) -> int:
        return len(self.envs)

    @property
    def obs_dim(self) -> int:
        return self.envs[0].obs_dim

    @property
    def action_count(self) -> int:
        return self.envs[0].action_count

    def step(self, actions: Sequence[int]) -> list[StepResult]:
        if len(actions) != len(self.envs):
            raise ValueError(f"expected {len(self.envs)} actions, got {len(actions)}")
        results = []
        for i, (env, a) in enumerate(zip(self.envs, actions)):
            try:
                res = env.step(a)
            except InvalidActionError as exc:
                raise InvalidActionError(f"env {i}: {exc}") from exc
            self._episode_returns[i] += res.reward
            self.step_counters[i] += 1
            if res.done:
                self.completed_returns.append(float(self._episode_returns[i]))
                self._episode_returns[i] = 0.0
                self.step_counters[i] = 0
                self.obs[i] = env.reset()
            else:
                self.obs[i] = res.next_obs
            results.append(res)
        return results

    def pop_completed_returns(self) -> list[float]:
        out, self.completed_returns = self.completed_returns, []
        return out


def vec_step(vec: VecEnv, actions: Sequence[int]) -> list[StepResult]:
    return vec.step(actions)
