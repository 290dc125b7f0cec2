"""Asymmetric actor-critic and running observation normalizer."""

from __future__ import annotations

import math

import numpy as np
import torch
from torch import nn

from kinoloco.errors import InvalidConfigError, InvalidInputError

ACTIVATIONS = {"tanh": nn.Tanh, "elu": nn.ELU, "relu": nn.ReLU}


def mlp(sizes: list[int], activation: str) -> nn.Sequential:
    if activation not in ACTIVATIONS:
        raise InvalidConfigError(f"unknown activation {activation!r}; choose from {sorted(ACTIVATIONS)}",
                                 key="activation")
    layers: list[nn.Module] = []
    for i in range(len(sizes) - 1):
        layers.append(nn.Linear(sizes[i], sizes[i + 1]))
        if i < len(sizes) - 2:
            layers.append(ACTIVATIONS[activation]())
    return nn.Sequential(*layers)


class ActorCritic(nn.Module):
    """Gaussian actor on the stacked observation; value critic on the privileged stack."""

    def __init__(
        self,
        obs_dim: int,
        privileged_dim: int,
        action_dim: int,
        actor_hidden: tuple[int, ...] = (512, 256, 128),
        critic_hidden: tuple[int, ...] = (512, 256, 128),
        activation: str = "tanh",
        init_log_std: float = 0.0,
        log_std_floor: float = math.log(0.05),
    ):
        super().__init__()
        self.obs_dim = obs_dim
        self.privileged_dim = privileged_dim
        self.action_dim = action_dim
        self.log_std_floor = log_std_floor
        self.actor = mlp([obs_dim, *actor_hidden, action_dim], activation)
        self.critic = mlp([privileged_dim, *critic_hidden, 1], activation)
        self.log_std = nn.Parameter(torch.full((action_dim,), float(init_log_std)))
        # Small final actor layer keeps initial actions near the default posture.
        with torch.no_grad():
            self.actor[-1].weight.mul_(0.01)
            self.actor[-1].bias.zero_()

    def _check(self, x: torch.Tensor, dim: int, what: str) -> None:
        if x.shape[-1] != dim:
            raise InvalidInputError(f"{what} must have last dimension {dim}, got {tuple(x.shape)}")

    def action_mean(self, obs: torch.Tensor) -> torch.Tensor:
        self._check(obs, self.obs_dim, "observation")
        return self.actor(obs)

    def value(self, privileged: torch.Tensor) -> torch.Tensor:
        self._check(privileged, self.privileged_dim, "privileged observation")
        return self.critic(privileged).squeeze(-1)

    def clamp_log_std(self) -> None:
        with torch.no_grad():
            self.log_std.clamp_(min=self.log_std_floor)


class RunningNormalizer:
    """Running mean/variance (parallel-merge form) kept in float64."""

    enabled = True

    def __init__(self, dim: int, clip: float = 5.0, epsilon: float = 1e-8):
        self.mean = np.zeros(dim)
        self.var = np.ones(dim)
        self.count = 0.0
        self.clip = clip
        self.epsilon = epsilon

    def update(self, batch: np.ndarray) -> None:
        batch = np.asarray(batch, dtype=float).reshape(-1, self.mean.shape[0])
        n = batch.shape[0]
        if n == 0:
            return
        b_mean = batch.mean(axis=0)
        b_var = batch.var(axis=0)
        total = self.count + n
        delta = b_mean - self.mean
        self.mean = self.mean + delta * n / total
        self.var = (self.var * self.count + b_var * n + delta**2 * self.count * n / total) / total
        self.count = total

    def normalize(self, x: np.ndarray) -> np.ndarray:
        out = (np.asarray(x, dtype=float) - self.mean) / np.sqrt(self.var + self.epsilon)
        return np.clip(out, -self.clip, self.clip)

    def state(self) -> dict[str, np.ndarray]:
        return {
            "mean": self.mean.copy(),
            "var": self.var.copy(),
            "count": np.array(self.count),
            "enabled": np.array(self.enabled),
        }

    def load_state(self, state: dict[str, np.ndarray]) -> None:
        if state["mean"].shape != self.mean.shape:
            raise InvalidInputError(f"normalizer dim {state['mean'].shape} != {self.mean.shape}")
        self.mean = np.array(state["mean"], dtype=float)
        self.var = np.array(state["var"], dtype=float)
        self.count = float(state["count"])


class IdentityNormalizer(RunningNormalizer):
    enabled = False

    def update(self, batch: np.ndarray) -> None:
        return None

    def normalize(self, x: np.ndarray) -> np.ndarray:
        return np.asarray(x, dtype=float)


def normalizer_from_state(state: dict[str, np.ndarray]) -> RunningNormalizer:
    dim = state["mean"].shape[0]
    norm = RunningNormalizer(dim) if bool(state.get("enabled", True)) else IdentityNormalizer(dim)
    norm.load_state(state)
    return norm
