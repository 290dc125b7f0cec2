"""Reward-gated velocity-range and gait cycle-time curricula, plus command sampling.

Both curricula share one gate: when the mean tracking reward over the last
evaluation window reaches ``lambda_threshold`` times its maximum, the forward
velocity range grows by ``v_increment`` (capped at ``v_cap``) and the gait
cycle time shrinks by ``cycle_shrink`` (floored at ``cycle_floor``).
"""

from __future__ import annotations

import dataclasses
from dataclasses import dataclass

import numpy as np

from kinoloco.errors import InvalidConfigError, InvalidInputError


@dataclass(frozen=True)
class CurriculumState:
    v_min: float = 0.0
    v_max: float = 1.0
    v_cap: float = 3.5
    v_increment: float = 0.5
    cycle_time: float = 0.64
    cycle_shrink: float = 0.95
    cycle_floor: float = 0.48
    lambda_threshold: float = 0.8
    lateral_range: float = 0.3
    yaw_range: float = 0.3
    velocity_enabled: bool = True
    cycle_enabled: bool = True

    def __post_init__(self):
        if not self.v_min <= self.v_max <= self.v_cap:
            raise InvalidConfigError(
                f"need v_min <= v_max <= v_cap, got {self.v_min}, {self.v_max}, {self.v_cap}",
                key="v_max",
            )
        if not self.cycle_floor <= self.cycle_time:
            raise InvalidConfigError(
                f"cycle_time {self.cycle_time} below floor {self.cycle_floor}", key="cycle_time"
            )
        if not 0.0 < self.lambda_threshold <= 1.0:
            raise InvalidConfigError("must lie in (0, 1]", key="lambda_threshold")
        if not 0.0 < self.cycle_shrink <= 1.0:
            raise InvalidConfigError("must lie in (0, 1]", key="cycle_shrink")
        if self.v_increment < 0:
            raise InvalidConfigError("must be non-negative", key="v_increment")

    def as_dict(self) -> dict:
        return dataclasses.asdict(self)


def _replace(state: CurriculumState, **changes) -> CurriculumState:
    # Cheaper than dataclasses.replace; the gate runs in tight replay loops.
    return CurriculumState(**{**state.__dict__, **changes})


def threshold_met(r_trk: float, r_trk_max: float, lam: float) -> bool:
    """True iff ``r_trk >= lam * r_trk_max``."""
    if not r_trk_max > 0:
        raise InvalidInputError(f"r_trk_max must be positive, got {r_trk_max}")
    return bool(r_trk >= lam * r_trk_max)


def update_velocity_range(state: CurriculumState, r_trk: float, r_trk_max: float) -> CurriculumState:
    if not threshold_met(r_trk, r_trk_max, state.lambda_threshold):
        return state
    return _replace(state, v_max=min(state.v_max + state.v_increment, state.v_cap))


def update_cycle_time(state: CurriculumState, r_trk: float, r_trk_max: float) -> CurriculumState:
    if not threshold_met(r_trk, r_trk_max, state.lambda_threshold):
        return state
    return _replace(state, cycle_time=max(state.cycle_time * state.cycle_shrink, state.cycle_floor))


def update(state: CurriculumState, r_trk: float, r_trk_max: float) -> tuple[CurriculumState, bool]:
    """Evaluate the gate once and apply every enabled rule.

    Returns the new state and whether the gate fired.
    """
    fired = threshold_met(r_trk, r_trk_max, state.lambda_threshold)
    if not fired or not (state.velocity_enabled or state.cycle_enabled):
        return state, fired
    changes = {}
    if state.velocity_enabled:
        changes["v_max"] = min(state.v_max + state.v_increment, state.v_cap)
    if state.cycle_enabled:
        changes["cycle_time"] = max(state.cycle_time * state.cycle_shrink, state.cycle_floor)
    return _replace(state, **changes), fired


def sample_command(state: CurriculumState, rng: np.random.Generator, n: int | None = None) -> np.ndarray:
    """Draw ``(v_x, v_y, yaw_rate)``; shape ``(3,)`` or ``(n, 3)``."""
    size = () if n is None else (n,)
    vx = rng.uniform(state.v_min, state.v_max, size)
    vy = rng.uniform(-state.lateral_range, state.lateral_range, size)
    yaw = rng.uniform(-state.yaw_range, state.yaw_range, size)
    return np.stack([vx, vy, yaw], axis=-1)
