"""Rollout collection over a batched environment."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import torch

from kinoloco.env.base import FAULT, FELL, TIMEOUT
from kinoloco.trainer.networks import ActorCritic, RunningNormalizer
from kinoloco.trainer.ppo import act, values


@dataclass
class RolloutBatch:
    obs: np.ndarray  # (T, N, obs_dim), normalized as seen by the actor
    privileged: np.ndarray  # (T, N, privileged_dim), normalized
    actions: np.ndarray  # (T, N, A)
    log_probs: np.ndarray  # (T, N)
    rewards: np.ndarray  # (T, N), timeout bootstrap folded in
    values: np.ndarray  # (T, N)
    dones: np.ndarray  # (T, N) bool
    terminations: np.ndarray  # (T, N) int
    valid: np.ndarray  # (T, N) bool, False for transitions of faulted episodes
    last_values: np.ndarray  # (N,)

    @property
    def shape(self) -> tuple[int, int]:
        return self.rewards.shape

    def flat(self, advantages: np.ndarray, returns: np.ndarray) -> dict[str, np.ndarray]:
        t, n = self.shape
        return {
            "obs": self.obs.reshape(t * n, -1),
            "privileged": self.privileged.reshape(t * n, -1),
            "actions": self.actions.reshape(t * n, -1),
            "old_log_prob": self.log_probs.reshape(-1),
            "advantages": advantages.reshape(-1),
            "returns": returns.reshape(-1),
            "weight": self.valid.reshape(-1).astype(float),
        }


@dataclass
class RolloutStats:
    """Per-rollout aggregates; episode-level lists cover episodes that finished in this window."""

    mean_reward: float = 0.0
    mean_tracking_reward: float = 0.0
    mean_abs_momentum_z: float = 0.0
    falls: int = 0
    timeouts: int = 0
    faults: int = 0
    episode_returns: list[float] = field(default_factory=list)
    episode_lengths: list[int] = field(default_factory=list)
    term_means: dict[str, float] = field(default_factory=dict)


class RolloutState:
    """Carries observations and running episode accumulators between rollouts."""

    def __init__(self, env, obs: np.ndarray, privileged: np.ndarray):
        n = env.num_envs
        self.obs = obs
        self.privileged = privileged
        self.episode_return = np.zeros(n)
        self.episode_length = np.zeros(n, dtype=np.int64)

    @classmethod
    def start(cls, env) -> "RolloutState":
        obs, privileged = env.reset()
        return cls(env, obs, privileged)


def collect_rollouts(
    env,
    model: ActorCritic,
    state: RolloutState,
    horizon: int,
    obs_norm: RunningNormalizer,
    privileged_norm: RunningNormalizer,
    discount: float,
    generator: torch.Generator | None = None,
    update_normalizers: bool = True,
) -> tuple[RolloutBatch, RolloutStats]:
    if horizon < 1:
        raise ValueError("horizon must be at least 1")
    n = env.num_envs
    buf = {
        "obs": np.zeros((horizon, n, env.obs_dim), dtype=np.float32),
        "privileged": np.zeros((horizon, n, env.privileged_dim), dtype=np.float32),
        "actions": np.zeros((horizon, n, env.action_dim)),
        "log_probs": np.zeros((horizon, n)),
        "rewards": np.zeros((horizon, n)),
        "values": np.zeros((horizon, n)),
        "dones": np.zeros((horizon, n), dtype=bool),
        "terminations": np.zeros((horizon, n), dtype=np.int64),
        "valid": np.ones((horizon, n), dtype=bool),
    }
    stats = RolloutStats()
    episode_start = np.zeros(n, dtype=np.int64)
    tracking_sum = 0.0
    reward_sum = 0.0
    momentum_sum = 0.0
    momentum_count = 0
    term_sums: dict[str, float] = {}
    for t in range(horizon):
        if update_normalizers:
            obs_norm.update(state.obs)
            privileged_norm.update(state.privileged)
        obs = obs_norm.normalize(state.obs).astype(np.float32)
        privileged = privileged_norm.normalize(state.privileged).astype(np.float32)
        actions, log_probs = act(model, obs, generator)
        value = values(model, privileged)
        result = env.step(actions)
        reward = result.reward.astype(float).copy()
        timeout = result.termination == TIMEOUT
        # Bootstrap truncated episodes with the value of the pre-step state.
        reward[timeout] += discount * value[timeout]
        buf["obs"][t] = obs
        buf["privileged"][t] = privileged
        buf["actions"][t] = actions
        buf["log_probs"][t] = log_probs
        buf["rewards"][t] = reward
        buf["values"][t] = value
        buf["dones"][t] = result.done
        buf["terminations"][t] = result.termination

        info = result.info
        tracking_sum += float(np.mean(info["tracking_reward"]))
        reward_sum += float(np.mean(result.reward))
        if "momentum" in info:
            momentum_sum += float(np.abs(info["momentum"][:, 2]).sum())
            momentum_count += n
        for name, value_t in info.get("reward_raw", {}).items():
            term_sums[name] = term_sums.get(name, 0.0) + float(np.mean(value_t))

        state.episode_return += result.reward
        state.episode_length += 1
        for e in np.flatnonzero(result.done):
            kind = result.termination[e]
            if kind == FAULT:
                buf["valid"][episode_start[e] : t + 1, e] = False
                stats.faults += 1
            else:
                stats.falls += int(kind == FELL)
                stats.timeouts += int(kind == TIMEOUT)
                stats.episode_returns.append(float(state.episode_return[e]))
                stats.episode_lengths.append(int(state.episode_length[e]))
            state.episode_return[e] = 0.0
            state.episode_length[e] = 0
            episode_start[e] = t + 1
        state.obs, state.privileged = result.obs, result.privileged

    last_priv = privileged_norm.normalize(state.privileged).astype(np.float32)
    batch = RolloutBatch(last_values=values(model, last_priv), **buf)
    stats.mean_reward = reward_sum / horizon
    stats.mean_tracking_reward = tracking_sum / horizon
    stats.mean_abs_momentum_z = momentum_sum / momentum_count if momentum_count else 0.0
    stats.term_means = {k: v / horizon for k, v in term_sums.items()}
    return batch, stats
