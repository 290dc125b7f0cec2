"""Interface shared by the batched environments the trainer drives."""

from __future__ import annotations

from typing import Any, NamedTuple, Protocol

import numpy as np

from kinoloco.curriculum import CurriculumState

RUNNING, FELL, TIMEOUT, FAULT = 0, 1, 2, 3
TERMINATION_NAMES = {RUNNING: "running", FELL: "fell", TIMEOUT: "timeout", FAULT: "fault"}


class StepResult(NamedTuple):
    obs: np.ndarray  # (n, obs_dim), already reset for finished envs
    privileged: np.ndarray  # (n, privileged_dim)
    reward: np.ndarray  # (n,)
    done: np.ndarray  # (n,) bool
    termination: np.ndarray  # (n,) int, one of RUNNING/FELL/TIMEOUT/FAULT
    info: dict[str, Any]  # must contain "tracking_reward" (n,)


class BatchedEnv(Protocol):
    num_envs: int
    obs_dim: int
    privileged_dim: int
    action_dim: int
    control_dt: float
    curriculum: CurriculumState

    def reset(self) -> tuple[np.ndarray, np.ndarray]: ...

    def step(self, actions: np.ndarray) -> StepResult: ...

    def set_curriculum(self, state: CurriculumState) -> None: ...
