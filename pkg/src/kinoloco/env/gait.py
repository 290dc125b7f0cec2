"""Gait clock, swing masks, joint reference generator and PD law."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from kinoloco.env.robot import (
    ANKLE_PITCH,
    HIP_PITCH,
    KNEE,
    LEFT_ARM,
    LEFT_LEG,
    NUM_JOINTS,
    RIGHT_ARM,
    RIGHT_LEG,
    SHOULDER_PITCH,
)
from kinoloco.errors import InvalidInputError
from kinoloco.rewards import velocity_ratio

TWO_PI = 2.0 * np.pi


@dataclass(frozen=True)
class GaitConfig:
    leg_amplitude: float = 0.25  # hip pitch swing amplitude at full velocity ratio, rad
    arm_gain: float = 0.5  # shoulder swing relative to the hip amplitude
    ramp_width: float = 0.1  # swing-mask ramp width in phase units


def gait_clock(time, cycle_time):
    cycle_time = np.asarray(cycle_time, dtype=float)
    if np.any(cycle_time <= 0):
        raise InvalidInputError(f"cycle_time must be positive, got {cycle_time}")
    angle = TWO_PI * np.asarray(time, dtype=float) / cycle_time
    return np.sin(angle), np.cos(angle)


def phase_of(time, cycle_time):
    return np.mod(np.asarray(time, dtype=float), cycle_time) / cycle_time


def _smoothstep(x):
    x = np.clip(x, 0.0, 1.0)
    return x * x * (3.0 - 2.0 * x)


def _half_cycle_mask(local, width):
    # ``local`` in [0, 1): swing lasts [0, 0.5) with ramps of ``width`` at both ends.
    if width < 1e-9:
        return (local < 0.5).astype(float)
    up = _smoothstep(local / width)
    down = _smoothstep((0.5 - local) / width)
    return np.where(local < 0.5, np.minimum(up, down), 0.0)


def swing_mask(phase, ramp_width: float = 0.1):
    """Per-foot swing mask, shape ``(..., 2)``: left swings on [0, 0.5), right on [0.5, 1)."""
    if not 0.0 <= ramp_width <= 0.25:
        raise InvalidInputError(f"ramp_width must lie in [0, 0.25], got {ramp_width}")
    phase = np.mod(np.asarray(phase, dtype=float), 1.0)
    left = _half_cycle_mask(phase, ramp_width)
    right = _half_cycle_mask(np.mod(phase + 0.5, 1.0), ramp_width)
    return np.stack([left, right], axis=-1)


def stance_mask(phase, ramp_width: float = 0.1):
    return 1.0 - swing_mask(phase, ramp_width)


def _swing_profiles(phase):
    s = np.sin(TWO_PI * np.asarray(phase, dtype=float))
    c = np.cos(TWO_PI * np.asarray(phase, dtype=float))
    left, right = np.maximum(s, 0.0), np.maximum(-s, 0.0)
    # d/dphase of the rectified profiles.
    d_left = np.where(s > 0, TWO_PI * c, 0.0)
    d_right = np.where(s < 0, -TWO_PI * c, 0.0)
    return left, right, d_left, d_right


def _amplitude(command, v_max, config: GaitConfig):
    command = np.asarray(command, dtype=float)
    return config.leg_amplitude * velocity_ratio(np.abs(command[..., 0]), v_max)


def _assemble(left, right, amp, config: GaitConfig):
    out = np.zeros(np.shape(amp) + (NUM_JOINTS,))
    for leg, s in ((LEFT_LEG, left), (RIGHT_LEG, right)):
        base = leg.start
        out[..., base + HIP_PITCH] = -amp * s
        out[..., base + KNEE] = 2.0 * amp * s
        out[..., base + ANKLE_PITCH] = -amp * s
    # Each arm swings forward with the opposite leg, i.e. against the same-side leg.
    arm = config.arm_gain * amp * (left - right)
    out[..., LEFT_ARM.start + SHOULDER_PITCH] = arm
    out[..., RIGHT_ARM.start + SHOULDER_PITCH] = -arm
    return out


def reference_offsets(phase, command, v_max: float, config: GaitConfig = GaitConfig()):
    """Joint reference offsets from the default posture, shape ``(..., 16)``."""
    left, right, _, _ = _swing_profiles(phase)
    amp = _amplitude(command, v_max, config)
    return _assemble(left, right, np.broadcast_to(amp, np.shape(left)), config)


def reference_joint_targets(phase, command, v_max: float, defaults, config: GaitConfig = GaitConfig()):
    return np.asarray(defaults, dtype=float) + reference_offsets(phase, command, v_max, config)


def reference_joint_rates(phase, command, cycle_time, v_max: float, config: GaitConfig = GaitConfig()):
    """Time derivative of the reference targets."""
    _, _, d_left, d_right = _swing_profiles(phase)
    amp = _amplitude(command, v_max, config)
    rates = _assemble(d_left, d_right, np.broadcast_to(amp, np.shape(d_left)), config)
    return rates / np.asarray(cycle_time, dtype=float)[..., None]


def pd_torques(targets, positions, velocities, kp, kd, torque_limit):
    targets, positions, velocities = (np.asarray(a, dtype=float) for a in (targets, positions, velocities))
    if not targets.shape[-1] == positions.shape[-1] == velocities.shape[-1] == NUM_JOINTS:
        raise InvalidInputError(
            f"expected {NUM_JOINTS} joints, got {targets.shape}, {positions.shape}, {velocities.shape}"
        )
    tau = np.asarray(kp) * (targets - positions) - np.asarray(kd) * velocities
    limit = np.asarray(torque_limit, dtype=float)
    return np.clip(tau, -limit, limit)
