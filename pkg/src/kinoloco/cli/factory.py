"""Construct environments and policies from a :class:`RunConfig`."""

from __future__ import annotations

import dataclasses

from kinoloco.cli.config import RunConfig, from_dict
from kinoloco.curriculum import CurriculumState
from kinoloco.env.humanoid import HumanoidEnv, PhysicsConfig
from kinoloco.env.pointmass import PointMassEnv
from kinoloco.env.randomization import DomainRandomizationConfig
from kinoloco.env.robot import RobotSpec
from kinoloco.errors import CheckpointError
from kinoloco.trainer.checkpoint import Checkpoint, load_checkpoint, load_into
from kinoloco.trainer.networks import ActorCritic, RunningNormalizer, normalizer_from_state


def make_env(
    config: RunConfig,
    seed: int,
    num_envs: int | None = None,
    evaluation: bool = False,
    physics_overrides: dict | None = None,
    episode_length_s: float | None = None,
    curriculum: CurriculumState | None = None,
):
    """Training env by default; ``evaluation`` disables randomization and pushes."""
    n = num_envs or config.trainer.num_envs
    curriculum = curriculum or config.curriculum
    if config.task == "pointmass":
        pm = dataclasses.replace(config.pointmass, num_envs=n)
        if episode_length_s is not None:
            pm = dataclasses.replace(pm, episode_length_s=episode_length_s)
        return PointMassEnv(pm, None, config.reward_constants, curriculum, seed)
    env_cfg = dataclasses.replace(config.env, num_envs=n)
    if episode_length_s is not None:
        env_cfg = dataclasses.replace(env_cfg, episode_length_s=episode_length_s)
    if physics_overrides:
        physics = from_dict(PhysicsConfig, {**dataclasses.asdict(env_cfg.physics), **physics_overrides}, "profile")
        env_cfg = dataclasses.replace(env_cfg, physics=physics)
    dr = DomainRandomizationConfig.disabled() if evaluation else config.domain_randomization
    spec = RobotSpec.load(config.robot)
    return HumanoidEnv(env_cfg, spec, dr, config.weights, config.reward_constants, curriculum, seed)


def restore_policy(path, env) -> tuple[ActorCritic, RunningNormalizer, RunningNormalizer, Checkpoint]:
    """Load a checkpoint and check it against ``env``'s dimensions."""
    ckpt = load_checkpoint(
        path,
        expect={"obs_dim": env.obs_dim, "privileged_dim": env.privileged_dim, "action_dim": env.action_dim},
    )
    arch = ckpt.meta["architecture"]
    model = ActorCritic(
        arch["obs_dim"],
        arch["privileged_dim"],
        arch["action_dim"],
        tuple(arch["actor_hidden"]),
        tuple(arch["critic_hidden"]),
        arch["activation"],
    )
    load_into(model, ckpt)
    norms = []
    for which, dim in (("obs", env.obs_dim), ("privileged", env.privileged_dim)):
        state = ckpt.normalizers.get(which)
        if state is None:
            raise CheckpointError(f"{path}: missing {which} normalizer statistics")
        if state["mean"].shape != (dim,):
            raise CheckpointError(f"{path}: {which} normalizer has shape {state['mean'].shape}, expected ({dim},)")
        norms.append(normalizer_from_state(state))
    return model, norms[0], norms[1], ckpt
