"""Simulation environments: the reduced-order humanoid and a 1-D point-mass smoke test."""

from kinoloco.env.base import FAULT, FELL, RUNNING, TIMEOUT, StepResult
from kinoloco.env.humanoid import EnvConfig, HumanoidEnv, PhysicsConfig, SimState
from kinoloco.env.pointmass import PointMassConfig, PointMassEnv
from kinoloco.env.randomization import DomainRandomizationConfig
from kinoloco.env.robot import RobotSpec

__all__ = [
    "DomainRandomizationConfig",
    "EnvConfig",
    "FAULT",
    "FELL",
    "HumanoidEnv",
    "PhysicsConfig",
    "PointMassConfig",
    "PointMassEnv",
    "RUNNING",
    "RobotSpec",
    "SimState",
    "StepResult",
    "TIMEOUT",
]
