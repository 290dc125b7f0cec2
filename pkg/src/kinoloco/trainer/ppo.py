"""PPO core: Gaussian policy helpers, GAE and the clipped-surrogate update."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
import torch

from kinoloco.errors import InvalidInputError, TrainingFault
from kinoloco.trainer.networks import ActorCritic

LOG_2PI = math.log(2.0 * math.pi)


@dataclass(frozen=True)
class PPOSettings:
    clip_ratio: float = 0.2
    entropy_coeff: float = 0.001
    value_loss_coeff: float = 1.0
    epochs: int = 5
    minibatch_size: int = 960
    max_grad_norm: float = 1.0
    normalize_advantages: bool = True
    lr_schedule: str = "fixed"  # or "adaptive"
    desired_kl: float = 0.01
    lr_bounds: tuple[float, float] = (1e-5, 1e-3)


def gaussian_log_prob(actions: torch.Tensor, mean: torch.Tensor, log_std: torch.Tensor) -> torch.Tensor:
    z = (actions - mean) * torch.exp(-log_std)
    return (-0.5 * z * z - log_std - 0.5 * LOG_2PI).sum(-1)


def gaussian_entropy(log_std: torch.Tensor) -> torch.Tensor:
    return (0.5 + 0.5 * LOG_2PI + log_std).sum(-1)


@torch.no_grad()
def act(
    model: ActorCritic,
    obs,
    generator: torch.Generator | None = None,
    deterministic: bool = False,
) -> tuple[np.ndarray, np.ndarray]:
    """Sample (or take the mean) action and its log-probability for a batch of observations."""
    param = next(model.parameters())
    obs_t = torch.as_tensor(np.asarray(obs), dtype=param.dtype)
    if obs_t.shape[-1] != model.obs_dim:
        raise InvalidInputError(f"observation must have last dimension {model.obs_dim}, got {tuple(obs_t.shape)}")
    mean = model.action_mean(obs_t)
    log_std = model.log_std.expand_as(mean)
    if deterministic:
        actions = mean
    else:
        noise = torch.randn(mean.shape, generator=generator, dtype=mean.dtype)
        actions = mean + torch.exp(log_std) * noise
    log_prob = gaussian_log_prob(actions, mean, log_std)
    return actions.numpy().copy(), log_prob.numpy().copy()


@torch.no_grad()
def values(model: ActorCritic, privileged) -> np.ndarray:
    param = next(model.parameters())
    return model.value(torch.as_tensor(np.asarray(privileged), dtype=param.dtype)).numpy().copy()


def compute_gae(
    rewards: np.ndarray,
    values_: np.ndarray,
    dones: np.ndarray,
    last_values: np.ndarray,
    discount: float = 0.994,
    lam: float = 0.9,
) -> tuple[np.ndarray, np.ndarray]:
    """Advantages and returns for ``(T, N)`` arrays; ``done[t]`` cuts bootstrapping from ``t + 1``."""
    rewards = np.asarray(rewards, dtype=float)
    values_ = np.asarray(values_, dtype=float)
    if rewards.shape != values_.shape or rewards.shape != np.shape(dones) or rewards.ndim != 2:
        raise InvalidInputError("rewards, values and dones must share a (T, N) shape")
    not_done = 1.0 - np.asarray(dones, dtype=float)
    horizon = rewards.shape[0]
    advantages = np.zeros_like(rewards)
    next_value = np.asarray(last_values, dtype=float)
    next_adv = np.zeros(rewards.shape[1])
    for t in reversed(range(horizon)):
        delta = rewards[t] + discount * next_value * not_done[t] - values_[t]
        next_adv = delta + discount * lam * not_done[t] * next_adv
        advantages[t] = next_adv
        next_value = values_[t]
    return advantages, advantages + values_


def normalize_advantages(adv: np.ndarray, mask: np.ndarray | None = None) -> np.ndarray:
    sel = adv if mask is None else adv[mask]
    if sel.size < 2:
        return adv - (sel.mean() if sel.size else 0.0)
    return (adv - sel.mean()) / (sel.std() + 1e-8)


def ppo_loss(model: ActorCritic, mb: dict[str, torch.Tensor], settings: PPOSettings):
    """Total loss and diagnostics for one minibatch (keys: obs, privileged, actions, old_log_prob,
    advantages, returns, optional weight)."""
    mean = model.action_mean(mb["obs"])
    log_std = model.log_std.expand_as(mean)
    log_prob = gaussian_log_prob(mb["actions"], mean, log_std)
    log_ratio = log_prob - mb["old_log_prob"]
    ratio = torch.exp(log_ratio)
    adv = mb["advantages"]
    weight = mb.get("weight")
    if weight is None:
        weight = torch.ones_like(adv)
    denom = weight.sum().clamp(min=1.0)
    surrogate = torch.min(ratio * adv, torch.clamp(ratio, 1 - settings.clip_ratio, 1 + settings.clip_ratio) * adv)
    policy_loss = -(surrogate * weight).sum() / denom
    value_pred = model.value(mb["privileged"])
    value_loss = ((mb["returns"] - value_pred) ** 2 * weight).sum() / denom
    entropy = gaussian_entropy(model.log_std)
    loss = policy_loss + settings.value_loss_coeff * value_loss - settings.entropy_coeff * entropy
    with torch.no_grad():
        approx_kl = (((ratio - 1) - log_ratio) * weight).sum() / denom
        clip_fraction = (((ratio - 1).abs() > settings.clip_ratio).to(adv.dtype) * weight).sum() / denom
    stats = {
        "policy_loss": policy_loss.detach(),
        "value_loss": value_loss.detach(),
        "entropy": entropy.detach(),
        "approx_kl": approx_kl,
        "clip_fraction": clip_fraction,
        "ratio_mean": ((ratio.detach() * weight).sum() / denom),
    }
    return loss, stats


def _adapt_lr(optimizer: torch.optim.Optimizer, kl: float, settings: PPOSettings) -> None:
    lo, hi = settings.lr_bounds
    for group in optimizer.param_groups:
        if kl > 2.0 * settings.desired_kl:
            group["lr"] = max(lo, group["lr"] / 1.5)
        elif 0.0 <= kl < 0.5 * settings.desired_kl:
            group["lr"] = min(hi, group["lr"] * 1.5)


def ppo_update(
    model: ActorCritic,
    optimizer: torch.optim.Optimizer,
    data: dict[str, np.ndarray],
    settings: PPOSettings,
    generator: torch.Generator | None = None,
) -> dict[str, float]:
    """Run ``settings.epochs`` passes of shuffled minibatch updates over flattened ``data``.

    ``data`` holds flat arrays: obs, privileged, actions, old_log_prob,
    advantages (already normalized if requested), returns and weight.
    """
    param = next(model.parameters())
    tensors = {k: torch.as_tensor(np.asarray(v), dtype=param.dtype) for k, v in data.items()}
    n = tensors["obs"].shape[0]
    if n % settings.minibatch_size != 0:
        raise InvalidInputError(f"batch of {n} is not divisible into minibatches of {settings.minibatch_size}")
    totals: dict[str, float] = {}
    first_ratio = None
    count = 0
    for epoch in range(settings.epochs):
        order = torch.randperm(n, generator=generator)
        for start in range(0, n, settings.minibatch_size):
            idx = order[start : start + settings.minibatch_size]
            mb = {k: v[idx] for k, v in tensors.items()}
            loss, stats = ppo_loss(model, mb, settings)
            if not torch.isfinite(loss):
                raise TrainingFault(
                    "non-finite PPO loss",
                    diagnostics={k: float(v) for k, v in stats.items()}
                    | {"advantage_abs_max": float(mb["advantages"].abs().max()),
                       "return_abs_max": float(mb["returns"].abs().max())},
                )
            if first_ratio is None:
                first_ratio = float(stats["ratio_mean"])
            optimizer.zero_grad()
            loss.backward()
            torch.nn.utils.clip_grad_norm_(model.parameters(), settings.max_grad_norm)
            optimizer.step()
            model.clamp_log_std()
            if settings.lr_schedule == "adaptive":
                _adapt_lr(optimizer, float(stats["approx_kl"]), settings)
            for k, v in stats.items():
                totals[k] = totals.get(k, 0.0) + float(v)
            count += 1
    out = {k: v / max(count, 1) for k, v in totals.items()}
    out["first_ratio_mean"] = first_ratio if first_ratio is not None else 1.0
    out["learning_rate"] = optimizer.param_groups[0]["lr"]
    return out
