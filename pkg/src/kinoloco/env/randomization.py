"""Domain-randomization ranges and base push impulses."""

from __future__ import annotations

import dataclasses
from dataclasses import dataclass

import numpy as np

from kinoloco.errors import InvalidConfigError


@dataclass(frozen=True)
class DomainRandomizationConfig:
    friction_range: tuple[float, float] = (0.2, 1.3)
    mass_scale_range: tuple[float, float] = (0.8, 1.2)
    gain_scale_range: tuple[float, float] = (0.9, 1.1)
    push_interval_range: tuple[float, float] = (4.0, 8.0)
    push_velocity_max: float = 0.5
    push_angular_max: float = 0.4
    noise_joint_pos: float = 0.01
    noise_joint_vel: float = 0.5
    noise_ang_vel: float = 0.1
    noise_euler: float = 0.03
    randomize_friction: bool = True
    randomize_mass: bool = True
    randomize_gains: bool = True
    push_enabled: bool = True
    noise_enabled: bool = True
    nominal_friction: float = 1.0

    def __post_init__(self):
        for name, enabled in (
            ("friction_range", self.randomize_friction),
            ("mass_scale_range", self.randomize_mass),
            ("gain_scale_range", self.randomize_gains),
            ("push_interval_range", self.push_enabled),
        ):
            lo, hi = getattr(self, name)
            object.__setattr__(self, name, (float(lo), float(hi)))
            if not (np.isfinite(lo) and np.isfinite(hi)) or lo > hi or (enabled and lo == hi):
                raise InvalidConfigError(f"range must satisfy low < high, got ({lo}, {hi})", key=name)
        if self.push_interval_range[0] <= 0 and self.push_enabled:
            raise InvalidConfigError("push interval must be positive", key="push_interval_range")
        if self.friction_range[0] < 0 or self.mass_scale_range[0] <= 0:
            raise InvalidConfigError("friction and mass scale must be non-negative", key="friction_range")
        for name in ("push_velocity_max", "push_angular_max", "noise_joint_pos", "noise_joint_vel",
                     "noise_ang_vel", "noise_euler"):
            if getattr(self, name) < 0:
                raise InvalidConfigError("must be non-negative", key=name)

    @classmethod
    def disabled(cls) -> "DomainRandomizationConfig":
        return cls(
            randomize_friction=False,
            randomize_mass=False,
            randomize_gains=False,
            push_enabled=False,
            noise_enabled=False,
        )

    def as_dict(self) -> dict:
        return {k: list(v) if isinstance(v, tuple) else v for k, v in dataclasses.asdict(self).items()}


def _draw(rng, rng_range, enabled, nominal, n):
    if not enabled:
        return np.full(n, float(nominal))
    return rng.uniform(rng_range[0], rng_range[1], n)


def draw_parameters(config: DomainRandomizationConfig, rng: np.random.Generator, n: int):
    """Per-episode ``(friction, mass_scale, gain_scale)``, each of shape ``(n,)``."""
    friction = _draw(rng, config.friction_range, config.randomize_friction, config.nominal_friction, n)
    mass = _draw(rng, config.mass_scale_range, config.randomize_mass, 1.0, n)
    gains = _draw(rng, config.gain_scale_range, config.randomize_gains, 1.0, n)
    return friction, mass, gains


def draw_push_interval(config: DomainRandomizationConfig, rng: np.random.Generator, n: int) -> np.ndarray:
    if not config.push_enabled:
        return np.full(n, np.inf)
    return rng.uniform(config.push_interval_range[0], config.push_interval_range[1], n)


def _disk(rng, radius, n, dim):
    direction = rng.normal(size=(n, dim))
    direction /= np.maximum(np.linalg.norm(direction, axis=1, keepdims=True), 1e-12)
    return direction * rng.uniform(0.0, radius, (n, 1))


def apply_push(velocities: np.ndarray, mask: np.ndarray, config: DomainRandomizationConfig,
               rng: np.random.Generator) -> tuple[np.ndarray, np.ndarray]:
    """Add a bounded impulse to base linear (x, y) and angular velocity of masked envs, in place.

    Returns the applied ``(linear (n, 2), angular (n, 3))`` increments; rows
    outside the mask are zero.
    """
    n = velocities.shape[0]
    mask = np.asarray(mask, dtype=bool)
    lin = np.zeros((n, 2))
    ang = np.zeros((n, 3))
    if not config.push_enabled or not mask.any():
        return lin, ang
    k = int(mask.sum())
    lin[mask] = _disk(rng, config.push_velocity_max, k, 2)
    ang[mask] = _disk(rng, config.push_angular_max, k, 3)
    velocities[:, 0:2] += lin
    velocities[:, 3:6] += ang
    return lin, ang
