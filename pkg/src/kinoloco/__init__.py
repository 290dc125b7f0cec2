"""Momentum-regularized humanoid locomotion: rewards, curricula, simulator and PPO."""

from kinoloco.errors import (
    CheckpointError,
    EnvironmentFault,
    InvalidConfigError,
    InvalidInputError,
    TrainingFault,
)

__all__ = [
    "CheckpointError",
    "EnvironmentFault",
    "InvalidConfigError",
    "InvalidInputError",
    "TrainingFault",
]

__version__ = "0.1.0"
