"""PPO trainer with an asymmetric (privileged-critic) actor-critic."""

from kinoloco.trainer.checkpoint import Checkpoint, load_checkpoint, load_into, save_checkpoint
from kinoloco.trainer.loop import TrainerConfig, TrainResult, build_model, train_loop
from kinoloco.trainer.networks import ActorCritic, RunningNormalizer
from kinoloco.trainer.ppo import PPOSettings, act, compute_gae, ppo_update
from kinoloco.trainer.rollout import RolloutBatch, RolloutState, collect_rollouts

__all__ = [
    "ActorCritic",
    "Checkpoint",
    "PPOSettings",
    "RolloutBatch",
    "RolloutState",
    "RunningNormalizer",
    "TrainResult",
    "TrainerConfig",
    "act",
    "build_model",
    "collect_rollouts",
    "compute_gae",
    "load_checkpoint",
    "load_into",
    "ppo_update",
    "save_checkpoint",
    "train_loop",
]
