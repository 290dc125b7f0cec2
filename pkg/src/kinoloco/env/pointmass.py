"""One-dimensional velocity-tracking point mass driven through the same reward and curriculum code."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from kinoloco.curriculum import CurriculumState, sample_command
from kinoloco.env.base import FAULT, RUNNING, TIMEOUT, StepResult
from kinoloco.errors import InvalidConfigError, InvalidInputError
from kinoloco.rewards import RewardConstants, RewardWeights, compose, reward_velocity_tracking


def tracking_only_weights() -> RewardWeights:
    terms = {"tracking_lin_vel": 1.0}
    return RewardWeights(alpha_a=0.0, alpha_v=0.0, general_term_weights=terms)


@dataclass(frozen=True)
class PointMassConfig:
    num_envs: int = 16
    dt: float = 0.05
    force_gain: float = 1.0
    drag: float = 2.0
    action_clip: float = 10.0
    episode_length_s: float = 10.0
    command_resample_s: float = 5.0
    scale_rewards_by_dt: bool = True

    def __post_init__(self):
        if self.num_envs < 1 or self.dt <= 0 or self.episode_length_s <= 0:
            raise InvalidConfigError("num_envs, dt and episode length must be positive", key="pointmass")


class PointMassEnv:
    action_dim = 1
    obs_dim = 2
    privileged_dim = 3

    def __init__(
        self,
        config: PointMassConfig = PointMassConfig(),
        weights: RewardWeights | None = None,
        constants: RewardConstants | None = None,
        curriculum: CurriculumState = CurriculumState(lateral_range=0.0, yaw_range=0.0),
        seed: int = 0,
    ):
        self.config = config
        self.weights = weights or tracking_only_weights()
        self.constants = constants or RewardConstants()
        self.curriculum = curriculum
        self.rng = np.random.default_rng(seed)
        self.num_envs = config.num_envs
        self.control_dt = config.dt
        self.max_episode_steps = int(round(config.episode_length_s / config.dt))
        self.resample_steps = int(round(config.command_resample_s / config.dt))
        self.velocity = np.zeros(self.num_envs)
        self.commands = np.zeros((self.num_envs, 3))
        self.episode_step = np.zeros(self.num_envs, dtype=np.int64)
        self.fixed_command: np.ndarray | None = None

    def set_curriculum(self, state: CurriculumState) -> None:
        self.curriculum = state

    def set_command(self, command) -> None:
        if command is None:
            self.fixed_command = None
            return
        self.fixed_command = np.broadcast_to(np.asarray(command, dtype=float), (self.num_envs, 3)).copy()
        self.commands[:] = self.fixed_command

    def _sample(self, mask):
        k = int(mask.sum())
        if k and self.fixed_command is not None:
            self.commands[mask] = self.fixed_command[mask]
        elif k:
            cmd = sample_command(self.curriculum, self.rng, k)
            cmd[:, 1:] = 0.0
            self.commands[mask] = cmd

    def _reset_envs(self, mask):
        self.velocity[mask] = 0.0
        self.episode_step[mask] = 0
        self._sample(mask)

    def reset(self):
        self._reset_envs(np.ones(self.num_envs, dtype=bool))
        return self._observe()

    def _observe(self):
        obs = np.stack([self.commands[:, 0], self.velocity], axis=1)
        privileged = np.concatenate([obs, (self.commands[:, 0] - self.velocity)[:, None]], axis=1)
        return obs, privileged

    def step(self, actions: np.ndarray) -> StepResult:
        actions = np.asarray(actions, dtype=float)
        if actions.shape != (self.num_envs, 1):
            raise InvalidInputError(f"actions must have shape {(self.num_envs, 1)}, got {actions.shape}")
        finite = np.isfinite(actions[:, 0])
        force = np.clip(np.where(finite, actions[:, 0], 0.0), -self.config.action_clip, self.config.action_clip)
        cfg = self.config
        self.velocity = self.velocity + cfg.dt * (cfg.force_gain * force - cfg.drag * self.velocity)
        self.episode_step += 1
        actual = np.zeros((self.num_envs, 3))
        actual[:, 0] = self.velocity
        tracking = reward_velocity_tracking(actual, self.commands, self.constants.tracking_sigma)
        breakdown = compose({"tracking_lin_vel": tracking}, self.weights)
        reward = breakdown.total * (cfg.dt if cfg.scale_rewards_by_dt else 1.0)
        termination = np.full(self.num_envs, RUNNING)
        termination[self.episode_step >= self.max_episode_steps] = TIMEOUT
        termination[~finite] = FAULT
        reward = np.where(finite, reward, 0.0)
        done = termination != RUNNING
        info = {
            "tracking_reward": tracking,
            "reward_raw": breakdown.raw,
            "reward_weighted": breakdown.weighted_terms,
            "base_velocity": actual,
            "actions": np.where(finite, force, 0.0)[:, None],
            "commands": self.commands.copy(),
        }
        resample = (~done) & (self.episode_step % self.resample_steps == 0)
        self._sample(resample)
        self._reset_envs(done)
        obs, privileged = self._observe()
        return StepResult(obs, privileged, reward, done, termination, info)
