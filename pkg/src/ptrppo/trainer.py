"""PPO with prioritized trajectory replay: rollouts, on-policy phase, replay phases."""

from __future__ import annotations

import logging
import time
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from . import approximator as ax
from .config import TrainConfig
from .envs import VecEnv, make_env
from .gae import compute_deltas, compute_gae
from .losses import (LossBreakdown, entropy_bonus, policy_loss_clipped, td_targets,
                     total_loss, value_loss_off, value_loss_on)
from .offpolicy import ratio_batch
from .priority import RunningReturnStats, advantage_priority, reward_priority
from .replay import PriorityMemory, StaleIndexError, Trajectory
from .seeding import substream

log = logging.getLogger(__name__)


class TrainingAborted(RuntimeError):
    def __init__(self, message: str, last_good: ax.PolicyValueParams, reports: list):
        super().__init__(message)
        self.last_good = last_good
        self.reports = reports


@dataclass
class LossSummary:
    value_loss: float
    policy_loss: float
    entropy: float
    total: float
    updates: int

    @classmethod
    def mean_of(cls, items: Sequence[LossBreakdown]) -> "LossSummary | None":
        if not items:
            return None
        return cls(*(float(np.mean([getattr(b, k) for b in items]))
                     for k in ("value_loss", "policy_loss", "entropy", "total")), len(items))


@dataclass
class IterationReport:
    iteration: int
    env_steps: int
    train_return: float  # mean of episodes finished during this iteration, NaN if none
    on_policy: LossSummary | None
    off_policy: LossSummary | None
    priority_rows: list[np.ndarray] = field(default_factory=list)
    eval_return: float | None = None
    eval_std: float | None = None
    wall_time: float = 0.0

    @property
    def losses(self) -> LossSummary | None:
        parts = [s for s in (self.on_policy, self.off_policy) if s is not None]
        if not parts:
            return None
        n = sum(p.updates for p in parts)
        return LossSummary(*(sum(getattr(p, k) * p.updates for p in parts) / n
                             for k in ("value_loss", "policy_loss", "entropy", "total")), n)


@dataclass
class TrainResult:
    params: ax.PolicyValueParams
    reports: list[IterationReport]
    stale_updates: int = 0
    memory: PriorityMemory | None = None

    def steps_to_threshold(self, threshold: float) -> float:
        for r in self.reports:
            if r.eval_return is not None and r.eval_return >= threshold:
                return float(r.env_steps)
        return float("inf")

    @property
    def final_eval_return(self) -> float:
        evals = [r.eval_return for r in self.reports if r.eval_return is not None]
        return evals[-1] if evals else float("nan")


# -- rollouts -----------------------------------------------------------------

def collect_rollout(vec: VecEnv, params: ax.PolicyValueParams, rollout_len: int,
                    rng: np.random.Generator) -> list[Trajectory]:
    """Run every env for ``rollout_len`` steps; one trajectory per env."""
    n, d = vec.num_envs, vec.obs_dim
    obs = np.empty((n, rollout_len, d))
    next_obs = np.empty((n, rollout_len, d))
    actions = np.empty((n, rollout_len), dtype=np.int64)
    rewards = np.empty((n, rollout_len))
    dones = np.empty((n, rollout_len))
    probs = np.empty((n, rollout_len))
    for t in range(rollout_len):
        obs[:, t] = vec.obs
        a, p = ax.sample_action(ax.forward(params, vec.obs), rng)
        results = vec.step(a)
        actions[:, t], probs[:, t] = a, p
        for i, res in enumerate(results):
            rewards[i, t] = res.reward
            next_obs[i, t] = res.next_obs
            dones[i, t] = float(res.done)
    return [Trajectory(obs[i], actions[i], rewards[i], next_obs[i], dones[i], probs[i]) for i in range(n)]


@dataclass
class _Batch:
    """Trajectories flattened into one batch plus per-step quantities under one parameter set."""

    trajs: list[Trajectory]
    obs: np.ndarray
    actions: np.ndarray
    rewards: np.ndarray
    dones: np.ndarray
    behavior_probs: np.ndarray
    values: np.ndarray
    next_values: np.ndarray
    probs_taken: np.ndarray
    bounds: list[tuple[int, int]]

    def segments(self, arr: np.ndarray):
        return [arr[a:b] for a, b in self.bounds]


def _evaluate(params: ax.PolicyValueParams, trajs: Sequence[Trajectory]) -> _Batch:
    obs = np.concatenate([t.obs for t in trajs])
    nxt = np.concatenate([t.next_obs for t in trajs])
    actions = np.concatenate([t.actions for t in trajs])
    both = ax.forward(params, np.concatenate([obs, nxt]))
    n = len(obs)
    bounds, start = [], 0
    for t in trajs:
        bounds.append((start, start + len(t)))
        start += len(t)
    return _Batch(
        list(trajs), obs, actions,
        np.concatenate([t.rewards for t in trajs]),
        np.concatenate([t.dones for t in trajs]),
        np.concatenate([t.behavior_probs for t in trajs]),
        both.value[:n], both.value[n:],
        both.action_probs[np.arange(n), actions],
        bounds,
    )


def _advantages(batch: _Batch, cfg: TrainConfig) -> np.ndarray:
    deltas = compute_deltas(batch.rewards, batch.values, batch.next_values, batch.dones, cfg.gamma)
    return np.concatenate([compute_gae(dl, dn, cfg.gamma, cfg.lam)
                           for dl, dn in zip(batch.segments(deltas), batch.segments(batch.dones))])


def _normalize(adv: np.ndarray) -> np.ndarray:
    return (adv - adv.mean()) / (adv.std() + 1e-8)


def _gradient_step(params, opt: ax.AdamState, obs, actions, targets, value_weights,
                   advantages, prob_old, cfg: TrainConfig) -> LossBreakdown:
    fwd = ax.forward(params, obs)
    if value_weights is None:
        vterm = value_loss_on(fwd.value, targets)
    else:
        vterm = value_loss_off(fwd.value, targets, value_weights)
    pterm = policy_loss_clipped(fwd.action_probs, actions, advantages, prob_old, cfg.clip_eps)
    breakdown = total_loss(vterm, pterm, entropy_bonus(fwd.action_probs), cfg.entropy_coef,
                           cfg.value_coef)
    if not np.isfinite(breakdown.total):
        raise ax.NonFiniteError(f"non-finite loss {breakdown.total}")
    grad = ax.backward(params, fwd, breakdown.dlogits, breakdown.dvalue)
    ax.apply_update(params, grad, opt)
    return breakdown


# -- phases -------------------------------------------------------------------

def on_policy_phase(params, opt: ax.AdamState, trajectories: Sequence[Trajectory],
                    cfg: TrainConfig) -> list[LossBreakdown]:
    """Clipped PPO on fresh data: ``n_on_policy_epochs`` full-batch updates against a snapshot."""
    old = ax.snapshot(params)
    batch = _evaluate(old, trajectories)
    adv = _advantages(batch, cfg)
    if cfg.normalize_advantages:
        adv = _normalize(adv)
    targets = td_targets(batch.rewards, batch.next_values, batch.dones, cfg.gamma)
    return [_gradient_step(params, opt, batch.obs, batch.actions, targets, None, adv,
                           batch.probs_taken, cfg)
            for _ in range(cfg.n_on_policy_epochs)]


def _priorities(batch: _Batch, cfg: TrainConfig, stats: RunningReturnStats,
                first_insertion: bool) -> tuple[list[float], RunningReturnStats]:
    out = []
    if cfg.priority_scheme == "reward":
        for traj in batch.trajs:
            p, stats = reward_priority(traj.undiscounted_return, stats, first_insertion, cfg.priority_eps)
            out.append(p.value)
    else:
        for seg in batch.segments(_advantages(batch, cfg)):
            out.append(advantage_priority(cfg.priority_scheme, seg, cfg.priority_eps).value)
    return out, stats


def store_trajectories(memory: PriorityMemory, trajectories: Sequence[Trajectory], params,
                       cfg: TrainConfig, stats: RunningReturnStats) -> RunningReturnStats:
    """Prioritize with the current value head and insert. Returns updated return statistics."""
    batch = _evaluate(params, trajectories)
    prios, stats = _priorities(batch, cfg, stats, first_insertion=True)
    for traj, p in zip(trajectories, prios):
        memory.insert(traj, p)
    return stats


@dataclass
class OffPolicyResult:
    losses: list[LossBreakdown]
    priority_rows: list[np.ndarray]
    stale_updates: int = 0


def replay_update(params, opt: ax.AdamState, trajectories: Sequence[Trajectory],
                  cfg: TrainConfig) -> LossBreakdown:
    """One replay update on already-sampled trajectories.

    The snapshot taken here is both the numerator of the importance ratios
    and the reference policy of the clipped surrogate.
    """
    old = ax.snapshot(params)
    batch = _evaluate(old, trajectories)
    adv_done = _advantages(batch, cfg)
    step_ratios, truncated = [], []
    for cur, beh, dn in zip(batch.segments(batch.probs_taken), batch.segments(batch.behavior_probs),
                            batch.segments(batch.dones)):
        rb = ratio_batch(cur, beh, dn, cfg.marg_eps, cfg.ratio_min, cfg.ratio_max)
        step_ratios.append(rb.step_ratios)
        truncated.append(rb.truncated)
    adv = np.concatenate(truncated) * adv_done
    if cfg.normalize_advantages:
        adv = _normalize(adv)
    targets = td_targets(batch.rewards, batch.next_values, batch.dones, cfg.gamma)
    return _gradient_step(params, opt, batch.obs, batch.actions, targets,
                          np.concatenate(step_ratios), adv, batch.probs_taken, cfg)


def off_policy_phase(params, opt: ax.AdamState, memory: PriorityMemory, cfg: TrainConfig,
                     rng: np.random.Generator, stats: RunningReturnStats) -> OffPolicyResult:
    result = OffPolicyResult([], [])
    if len(memory) == 0:
        return result
    for _ in range(cfg.n_off_policy_iters):
        records = memory.sample(cfg.off_batch_trajectories, rng)
        trajs = [r.trajectory for r in records]
        result.losses.append(replay_update(params, opt, trajs, cfg))
        # refresh each distinct sampled slot under the updated network
        unique = {}
        for r in records:
            unique.setdefault(r.index, r.trajectory)
        fresh = _evaluate(params, list(unique.values()))
        prios, _ = _priorities(fresh, cfg, stats, first_insertion=False)
        for (index, traj), p in zip(unique.items(), prios):
            try:
                memory.update_priority(index, p, traj.insertion_index)
            except StaleIndexError as exc:
                result.stale_updates += 1
                log.warning("dropping stale priority update: %s", exc)
        result.priority_rows.append(memory.priority_snapshot())
    return result


# -- evaluation and main loop -------------------------------------------------

def evaluate(params, cfg: TrainConfig, episodes: int, rng: np.random.Generator) -> np.ndarray:
    """Undiscounted returns of ``episodes`` episodes under the stochastic policy."""
    if episodes < 1:
        raise ValueError("episodes must be >= 1")
    env = make_env(cfg.env, rng, **cfg.env_kwargs())
    if env.obs_dim != params.obs_dim or env.action_count != params.action_count:
        raise ValueError(
            f"network expects obs_dim={params.obs_dim}, actions={params.action_count}; "
            f"{cfg.env} has obs_dim={env.obs_dim}, actions={env.action_count}")
    returns = np.zeros(episodes)
    for ep in range(episodes):
        obs, done = env.reset(), False
        while not done:
            a, _ = ax.sample_action(ax.forward(params, obs), rng)
            res = env.step(int(a[0]))
            returns[ep] += res.reward
            obs, done = res.next_obs, res.done
    return returns


def optimal_return(cfg: TrainConfig) -> float:
    return make_env(cfg.env, **cfg.env_kwargs()).optimal_return


def train(cfg: TrainConfig,
          on_report: Callable[[IterationReport, ax.PolicyValueParams], None] | None = None) -> TrainResult:
    """Run the outer loop: collect, on-policy update, store, replay, report.

    ``on_report`` is called after every iteration with the report and the
    live parameters (for checkpointing); it must not modify them.
    """
    cfg.validate()
    vec = VecEnv.make(cfg.env, cfg.num_envs, cfg.seed, **cfg.env_kwargs())
    params = ax.init_params(vec.obs_dim, vec.action_count, substream(cfg.seed, "init"), cfg.hidden_size)
    opt = ax.AdamState(lr=cfg.lr)
    policy_rng = substream(cfg.seed, "policy")
    replay_rng = substream(cfg.seed, "replay")
    eval_rng = substream(cfg.seed, "eval")
    use_replay = cfg.n_off_policy_iters > 0
    memory = PriorityMemory(cfg.memory_capacity, cfg.alpha) if use_replay else None
    stats = RunningReturnStats()
    reports: list[IterationReport] = []
    stale = 0
    steps = 0
    start = time.perf_counter()

    for it in range(cfg.max_iterations):
        last_good = params.copy()
        try:
            trajs = collect_rollout(vec, params, cfg.rollout_len, policy_rng)
            on = on_policy_phase(params, opt, trajs, cfg)
            off = OffPolicyResult([], [])
            if use_replay:
                stats = store_trajectories(memory, trajs, params, cfg, stats)
                off = off_policy_phase(params, opt, memory, cfg, replay_rng, stats)
                stale += off.stale_updates
            if not params.is_finite():
                raise ax.NonFiniteError("parameters became non-finite")
        except ax.NonFiniteError as exc:
            raise TrainingAborted(f"iteration {it}: {exc}", last_good, reports) from exc

        prev_steps, steps = steps, steps + cfg.steps_per_iteration
        finished = vec.pop_completed_returns()
        report = IterationReport(
            it, steps, float(np.mean(finished)) if finished else float("nan"),
            LossSummary.mean_of(on), LossSummary.mean_of(off.losses), off.priority_rows)
        if steps // cfg.eval_interval > prev_steps // cfg.eval_interval:
            ev = evaluate(params, cfg, cfg.eval_episodes, eval_rng)
            report.eval_return, report.eval_std = float(ev.mean()), float(ev.std())
        report.wall_time = time.perf_counter() - start
        reports.append(report)
        if on_report is not None:
            on_report(report, params)
        if (cfg.early_stop_return > 0 and report.eval_return is not None
                and report.eval_return >= cfg.early_stop_return):
            break

    return TrainResult(params, reports, stale, memory)
