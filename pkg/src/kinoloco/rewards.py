"""Reward terms and their weighted composition.

Every term function broadcasts over leading batch axes, so the same code scores
a single robot or a batch of environments. The step reward is

    total = alpha_a * r_a + alpha_v * (alpha_b * r_b + alpha_f * r_f + alpha_p * r_p)
            + alpha_c * sum(general terms)

where the general terms follow common legged-locomotion practice (velocity and
yaw tracking, orientation, action-rate and torque penalties, alive bonus).
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Mapping

import numpy as np

from kinoloco.errors import InvalidConfigError, InvalidInputError
from kinoloco.kinodyn import MomentumReport

# Fixed summation order of the general bundle; part of the composition contract.
GENERAL_TERMS: tuple[str, ...] = (
    "tracking_lin_vel",
    "tracking_yaw",
    "orientation",
    "action_rate",
    "torques",
    "alive",
)

DEFAULT_GENERAL_WEIGHTS: dict[str, float] = {
    "tracking_lin_vel": 1.2,
    "tracking_yaw": 0.5,
    "orientation": -1.0,
    "action_rate": -0.01,
    "torques": -0.01,
    "alive": 0.2,
}

# exp() argument cap for the momentum penalty; exact whenever c1 > -exp(50).
_MOMENTUM_EXP_CAP = 50.0
_JOINT_RATE_GUARD = 5.0


@dataclass
class RewardWeights:
    alpha_a: float = 0.05
    alpha_v: float = 0.1
    alpha_c: float = 1.0
    alpha_b: float = 0.2
    alpha_f: float = 1.0
    alpha_p: float = 1.6
    general_term_weights: dict[str, float] = field(
        default_factory=lambda: dict(DEFAULT_GENERAL_WEIGHTS)
    )

    def __post_init__(self):
        for name in ("alpha_a", "alpha_v", "alpha_c", "alpha_b", "alpha_f", "alpha_p"):
            if not np.isfinite(getattr(self, name)):
                raise InvalidConfigError("weight must be finite", key=name)
        unknown = set(self.general_term_weights) - set(GENERAL_TERMS)
        if unknown:
            raise InvalidConfigError(
                f"unknown general reward terms {sorted(unknown)}; valid: {list(GENERAL_TERMS)}",
                key="general_term_weights",
            )
        for name, value in self.general_term_weights.items():
            if not np.isfinite(value):
                raise InvalidConfigError("weight must be finite", key=f"general_term_weights.{name}")


@dataclass
class RewardConstants:
    """Shape constants of the individual terms."""

    beta_b: float = 100.0
    gamma_b: float = 0.05
    beta_p: float = -2.0
    gamma_p: float = 0.2
    joint_clip_low: float = 0.0
    joint_clip_high: float = 0.5
    momentum_clip_low: float = -5.0
    momentum_clip_high: float = 0.0
    # "full" uses the 3-vector norm, "yaw" only the z component.
    momentum_mode: str = "full"
    tracking_sigma: float = 4.0
    yaw_tracking_sigma: float = 4.0
    # "literal" is the signed unbounded clearance sum, "bounded" a clipped tolerance.
    feet_clearance_mode: str = "literal"
    feet_clearance_tolerance: float = 0.1
    # Disables velocity scaling (ratio fixed at 1) when False; used for ablations.
    velocity_scaling: bool = True

    def __post_init__(self):
        if self.momentum_mode not in ("full", "yaw"):
            raise InvalidConfigError("expected 'full' or 'yaw'", key="momentum_mode")
        if self.feet_clearance_mode not in ("literal", "bounded"):
            raise InvalidConfigError("expected 'literal' or 'bounded'", key="feet_clearance_mode")
        if self.momentum_clip_low > self.momentum_clip_high:
            raise InvalidConfigError("lower bound exceeds upper bound", key="momentum_clip_low")
        if self.joint_clip_low > self.joint_clip_high:
            raise InvalidConfigError("lower bound exceeds upper bound", key="joint_clip_low")
        if self.beta_b <= 0:
            raise InvalidConfigError("must be positive", key="beta_b")


@dataclass
class RewardContext:
    """Everything the reward terms read for one step (optionally batched)."""

    momentum: np.ndarray
    base_height: np.ndarray
    nominal_base_height: float
    target_height_offset: float
    foot_heights: np.ndarray
    target_foot_height: float
    swing_mask: np.ndarray
    joint_positions: np.ndarray
    joint_targets: np.ndarray
    joint_velocities: np.ndarray
    commanded_velocity: np.ndarray
    actual_base_velocity: np.ndarray
    curriculum_v_max: float
    phase: np.ndarray
    projected_gravity: np.ndarray | None = None
    actions: np.ndarray | None = None
    last_actions: np.ndarray | None = None
    torques: np.ndarray | None = None
    torque_limits: np.ndarray | None = None


@dataclass
class RewardBreakdown:
    """Raw and weighted values of every term.

    ``weighted`` holds the three category contributions (``angular``,
    ``velocity``, ``general``) whose sum, in that order, is ``total``;
    ``weighted_terms`` holds each term's effective contribution for logging.
    """

    total: np.ndarray
    raw: dict[str, np.ndarray]
    weighted: dict[str, np.ndarray]
    weighted_terms: dict[str, np.ndarray]

    def mean_terms(self) -> dict[str, float]:
        out = {f"raw_{k}": float(np.mean(v)) for k, v in self.raw.items()}
        out.update({f"w_{k}": float(np.mean(v)) for k, v in self.weighted_terms.items()})
        return out


def velocity_ratio(v_cmd, v_max):
    """Commanded speed as a fraction of the curriculum maximum, clamped to [0, 1]."""
    v_max = np.asarray(v_max, dtype=float)
    if np.any(v_max <= 0):
        raise InvalidInputError(f"v_max must be positive, got {v_max}")
    return np.clip(np.asarray(v_cmd, dtype=float) / v_max, 0.0, 1.0)


def _momentum_vector(momentum) -> np.ndarray:
    if isinstance(momentum, MomentumReport):
        return np.asarray(momentum.total, dtype=float)
    return np.asarray(momentum, dtype=float)


def reward_angular_momentum(momentum, c1: float = -5.0, c2: float = 0.0, mode: str = "full"):
    """``clip(-exp(||L||), c1, c2)``; ``mode='yaw'`` takes the norm of L_z only."""
    if c1 > c2:
        raise InvalidConfigError(f"clip bounds out of order: c1={c1} > c2={c2}", key="momentum_clip")
    vec = _momentum_vector(momentum)
    if mode == "yaw":
        norm = np.abs(vec[..., 2])
    elif mode == "full":
        norm = np.linalg.norm(vec, axis=-1)
    else:
        raise InvalidConfigError(f"unknown momentum mode {mode!r}", key="momentum_mode")
    return np.clip(-np.exp(np.minimum(norm, _MOMENTUM_EXP_CAP)), c1, c2)


def reward_base_height(h_b, h_b_hat, beta_b: float, gamma_b: float, ratio):
    """``exp(-beta_b * |h_b - gamma_b * h_b_hat * ratio|)``.

    ``h_b`` is the deviation of base height from the nominal standing height,
    so ``gamma_b * h_b_hat * ratio`` acts as a speed-proportional height offset.
    """
    if beta_b <= 0:
        raise InvalidInputError("beta_b must be positive")
    target = gamma_b * h_b_hat * np.asarray(ratio, dtype=float)
    return np.exp(-beta_b * np.abs(np.asarray(h_b, dtype=float) - target))


def reward_feet_clearance(
    foot_heights, target: float, ratio, swing_mask, mode: str = "literal", tolerance: float = 0.1
):
    foot_heights = np.asarray(foot_heights, dtype=float)
    swing_mask = np.asarray(swing_mask, dtype=float)
    if foot_heights.shape != swing_mask.shape:
        raise InvalidInputError(
            f"foot heights {foot_heights.shape} and swing mask {swing_mask.shape} differ"
        )
    gap = foot_heights - target * np.asarray(ratio, dtype=float)[..., None]
    if mode == "bounded":
        gap = -np.minimum(np.abs(gap), tolerance)
    elif mode != "literal":
        raise InvalidConfigError(f"unknown clearance mode {mode!r}", key="feet_clearance_mode")
    return (swing_mask * gap).sum(axis=-1)


def joint_error_norm(theta, theta_hat, theta_dot):
    """``||(theta_hat - theta) * exp(-theta_dot)||`` with the exponent clamped to [-5, 5]."""
    theta = np.asarray(theta, dtype=float)
    theta_hat = np.asarray(theta_hat, dtype=float)
    theta_dot = np.asarray(theta_dot, dtype=float)
    if not (theta.shape == theta_hat.shape == theta_dot.shape):
        raise InvalidInputError(
            f"joint vectors differ in shape: {theta.shape}, {theta_hat.shape}, {theta_dot.shape}"
        )
    weight = np.exp(np.clip(-theta_dot, -_JOINT_RATE_GUARD, _JOINT_RATE_GUARD))
    return np.linalg.norm((theta_hat - theta) * weight, axis=-1)


def reward_joint_position(
    theta,
    theta_hat,
    theta_dot,
    beta_p: float = -2.0,
    gamma_p: float = 0.2,
    c1: float = 0.0,
    c2: float = 0.5,
):
    err = joint_error_norm(theta, theta_hat, theta_dot)
    return np.exp(beta_p * err) - gamma_p * np.clip(err, c1, c2)


def reward_velocity_tracking(actual, commanded, sigma: float = 4.0):
    """``exp(-sigma * ||v_xy - v_xy_cmd||^2)``; its supremum is 1."""
    actual = np.asarray(actual, dtype=float)
    commanded = np.asarray(commanded, dtype=float)
    err = actual[..., :2] - commanded[..., :2]
    return np.exp(-sigma * np.sum(err * err, axis=-1))


TRACKING_REWARD_MAX = 1.0


def general_reward_bundle(ctx: RewardContext, constants: RewardConstants | None = None) -> dict:
    constants = constants or RewardConstants()
    cmd = np.asarray(ctx.commanded_velocity, dtype=float)
    actual = np.asarray(ctx.actual_base_velocity, dtype=float)
    batch = cmd.shape[:-1]
    yaw_err = actual[..., 2] - cmd[..., 2]
    terms = {
        "tracking_lin_vel": reward_velocity_tracking(actual, cmd, constants.tracking_sigma),
        "tracking_yaw": np.exp(-constants.yaw_tracking_sigma * yaw_err * yaw_err),
    }
    if ctx.projected_gravity is None:
        terms["orientation"] = np.zeros(batch)
    else:
        g = np.asarray(ctx.projected_gravity, dtype=float)
        terms["orientation"] = np.sum(g[..., :2] ** 2, axis=-1)
    if ctx.actions is None or ctx.last_actions is None:
        terms["action_rate"] = np.zeros(batch)
    else:
        diff = np.asarray(ctx.actions, dtype=float) - np.asarray(ctx.last_actions, dtype=float)
        terms["action_rate"] = np.sum(diff * diff, axis=-1)
    if ctx.torques is None:
        terms["torques"] = np.zeros(batch)
    else:
        tau = np.asarray(ctx.torques, dtype=float)
        if ctx.torque_limits is not None:
            tau = tau / np.asarray(ctx.torque_limits, dtype=float)
        terms["torques"] = np.sum(tau * tau, axis=-1)
    terms["alive"] = np.ones(batch)
    return terms


def raw_terms(ctx: RewardContext, constants: RewardConstants | None = None) -> dict:
    """Evaluate every raw term for a context."""
    constants = constants or RewardConstants()
    cmd = np.asarray(ctx.commanded_velocity, dtype=float)
    if constants.velocity_scaling:
        ratio = velocity_ratio(np.abs(cmd[..., 0]), ctx.curriculum_v_max)
    else:
        ratio = np.ones(cmd.shape[:-1])
    base_dev = np.asarray(ctx.base_height, dtype=float) - ctx.nominal_base_height
    raw = {
        "r_a": reward_angular_momentum(
            ctx.momentum,
            constants.momentum_clip_low,
            constants.momentum_clip_high,
            constants.momentum_mode,
        ),
        "r_b": reward_base_height(
            base_dev, ctx.target_height_offset, constants.beta_b, constants.gamma_b, ratio
        ),
        "r_f": reward_feet_clearance(
            ctx.foot_heights,
            ctx.target_foot_height,
            ratio,
            ctx.swing_mask,
            constants.feet_clearance_mode,
            constants.feet_clearance_tolerance,
        ),
        "r_p": reward_joint_position(
            ctx.joint_positions,
            ctx.joint_targets,
            ctx.joint_velocities,
            constants.beta_p,
            constants.gamma_p,
            constants.joint_clip_low,
            constants.joint_clip_high,
        ),
    }
    raw.update(general_reward_bundle(ctx, constants))
    raw["r_trk"] = raw["tracking_lin_vel"]
    return raw


def compose(raw: Mapping[str, np.ndarray], weights: RewardWeights) -> RewardBreakdown:
    """Weighted composition of precomputed raw terms.

    Missing general terms count as zero. ``r_trk`` is an alias of the general
    ``tracking_lin_vel`` term and is not added a second time.
    """
    r_a = np.asarray(raw.get("r_a", 0.0), dtype=float)
    r_b = np.asarray(raw.get("r_b", 0.0), dtype=float)
    r_f = np.asarray(raw.get("r_f", 0.0), dtype=float)
    r_p = np.asarray(raw.get("r_p", 0.0), dtype=float)
    r_v = weights.alpha_b * r_b + weights.alpha_f * r_f + weights.alpha_p * r_p
    r_c = np.zeros(np.broadcast(r_a, r_b, r_f, r_p).shape)
    weighted_terms = {
        "r_a": weights.alpha_a * r_a,
        "r_b": weights.alpha_v * (weights.alpha_b * r_b),
        "r_f": weights.alpha_v * (weights.alpha_f * r_f),
        "r_p": weights.alpha_v * (weights.alpha_p * r_p),
    }
    for name in GENERAL_TERMS:
        w = weights.general_term_weights.get(name, 0.0)
        value = w * np.asarray(raw.get(name, 0.0), dtype=float)
        r_c = r_c + value
        weighted_terms[name] = weights.alpha_c * value
    weighted = {
        "angular": weights.alpha_a * r_a,
        "velocity": weights.alpha_v * r_v,
        "general": weights.alpha_c * r_c,
    }
    total = weighted["angular"] + weighted["velocity"] + weighted["general"]
    full_raw = {k: np.asarray(v, dtype=float) for k, v in raw.items()}
    full_raw["r_v"] = r_v
    full_raw["r_c"] = r_c
    return RewardBreakdown(total=total, raw=full_raw, weighted=weighted, weighted_terms=weighted_terms)


def compose_total(
    ctx: RewardContext, weights: RewardWeights | None = None, constants: RewardConstants | None = None
) -> RewardBreakdown:
    return compose(raw_terms(ctx, constants), weights or RewardWeights())
