"""Training orchestration: collect, estimate advantages, update, gate the curriculum, log."""

from __future__ import annotations

import csv
import dataclasses
import io
import logging
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable

import numpy as np
import torch

from kinoloco.curriculum import CurriculumState
from kinoloco.curriculum import update as curriculum_update
from kinoloco.errors import InvalidConfigError, TrainingFault
from kinoloco.rewards import TRACKING_REWARD_MAX
from kinoloco.trainer.checkpoint import atomic_write_bytes, save_checkpoint
from kinoloco.trainer.networks import ActorCritic, IdentityNormalizer, RunningNormalizer
from kinoloco.trainer.ppo import PPOSettings, compute_gae, normalize_advantages, ppo_update
from kinoloco.trainer.rollout import RolloutState, collect_rollouts

log = logging.getLogger(__name__)

METRIC_COLUMNS = (
    "iteration",
    "env_steps",
    "mean_reward",
    "mean_tracking_reward",
    "v_max",
    "cycle_time",
    "gate_fired",
    "mean_abs_Lz",
    "falls",
    "timeouts",
    "faults",
    "policy_loss",
    "value_loss",
    "entropy",
    "approx_kl",
    "clip_fraction",
    "learning_rate",
)


@dataclass(frozen=True)
class TrainerConfig:
    num_envs: int = 64
    horizon: int = 60
    minibatch_size: int = 960
    epochs: int = 5
    discount: float = 0.994
    gae_lambda: float = 0.9
    entropy_coeff: float = 0.001
    learning_rate: float = 1e-5
    clip_ratio: float = 0.2
    value_loss_coeff: float = 1.0
    max_grad_norm: float = 1.0
    max_iterations: int = 1500
    seed: int = 0
    actor_hidden: tuple[int, ...] = (512, 256, 128)
    critic_hidden: tuple[int, ...] = (512, 256, 128)
    activation: str = "tanh"
    init_log_std: float = 0.0
    log_std_floor: float = math.log(0.05)
    normalize_advantages: bool = True
    normalize_observations: bool = True
    lr_schedule: str = "fixed"
    desired_kl: float = 0.01
    checkpoint_interval: int = 100
    curriculum_interval: int = 10
    torch_threads: int = 1

    def __post_init__(self):
        object.__setattr__(self, "actor_hidden", tuple(int(h) for h in self.actor_hidden))
        object.__setattr__(self, "critic_hidden", tuple(int(h) for h in self.critic_hidden))
        if not 0.0 < self.discount < 1.0:
            raise InvalidConfigError("must lie in (0, 1)", key="trainer.discount")
        if not 0.0 <= self.gae_lambda <= 1.0:
            raise InvalidConfigError("must lie in [0, 1]", key="trainer.gae_lambda")
        if self.num_envs < 1 or self.horizon < 1 or self.minibatch_size < 1 or self.epochs < 1:
            raise InvalidConfigError("num_envs, horizon, minibatch_size and epochs must be >= 1",
                                     key="trainer.minibatch_size")
        if (self.num_envs * self.horizon) % self.minibatch_size != 0:
            raise InvalidConfigError(
                f"minibatch_size {self.minibatch_size} does not divide the batch of "
                f"{self.num_envs * self.horizon}",
                key="trainer.minibatch_size",
            )
        if self.lr_schedule not in ("fixed", "adaptive"):
            raise InvalidConfigError("must be 'fixed' or 'adaptive'", key="trainer.lr_schedule")
        if self.max_iterations < 0 or self.checkpoint_interval < 1 or self.curriculum_interval < 1:
            raise InvalidConfigError("iteration counts must be non-negative", key="trainer.max_iterations")
        if self.learning_rate <= 0:
            raise InvalidConfigError("must be positive", key="trainer.learning_rate")

    @property
    def batch_size(self) -> int:
        return self.num_envs * self.horizon

    def ppo_settings(self) -> PPOSettings:
        return PPOSettings(
            clip_ratio=self.clip_ratio,
            entropy_coeff=self.entropy_coeff,
            value_loss_coeff=self.value_loss_coeff,
            epochs=self.epochs,
            minibatch_size=self.minibatch_size,
            max_grad_norm=self.max_grad_norm,
            normalize_advantages=self.normalize_advantages,
            lr_schedule=self.lr_schedule,
            desired_kl=self.desired_kl,
            lr_bounds=(min(self.learning_rate, 1e-5), max(self.learning_rate, 1e-3)),
        )


def architecture(config: TrainerConfig, env) -> dict:
    return {
        "obs_dim": int(env.obs_dim),
        "privileged_dim": int(env.privileged_dim),
        "action_dim": int(env.action_dim),
        "actor_hidden": list(config.actor_hidden),
        "critic_hidden": list(config.critic_hidden),
        "activation": config.activation,
    }


def build_model(config: TrainerConfig, env) -> ActorCritic:
    return ActorCritic(
        env.obs_dim,
        env.privileged_dim,
        env.action_dim,
        config.actor_hidden,
        config.critic_hidden,
        config.activation,
        config.init_log_std,
        config.log_std_floor,
    )


def build_normalizers(config: TrainerConfig, env) -> tuple[RunningNormalizer, RunningNormalizer]:
    cls = RunningNormalizer if config.normalize_observations else IdentityNormalizer
    return cls(env.obs_dim), cls(env.privileged_dim)


def format_value(value) -> str:
    if isinstance(value, (bool, np.bool_)):
        return str(int(value))
    if isinstance(value, (int, np.integer)):
        return str(int(value))
    return repr(float(value))


def write_csv(path: Path, columns: list[str], rows: list[dict]) -> None:
    buffer = io.StringIO()
    writer = csv.writer(buffer, lineterminator="\n")
    writer.writerow(columns)
    for row in rows:
        writer.writerow([format_value(row.get(c, float("nan"))) for c in columns])
    atomic_write_bytes(path, buffer.getvalue().encode())


@dataclass
class TrainResult:
    model: ActorCritic
    curriculum: CurriculumState
    obs_norm: RunningNormalizer
    privileged_norm: RunningNormalizer
    metrics: list[dict] = field(default_factory=list)
    checkpoints: list[Path] = field(default_factory=list)


def _finite_parameters(model: torch.nn.Module) -> bool:
    return all(bool(torch.isfinite(p).all()) for p in model.parameters())


def train_loop(
    config: TrainerConfig,
    env,
    out_dir: str | Path | None = None,
    run_config: dict | None = None,
    progress: Callable[[dict], None] | None = None,
) -> TrainResult:
    """Train a policy on ``env``; writes ``metrics.csv`` and ``checkpoints/`` under ``out_dir``."""
    if env.num_envs != config.num_envs:
        raise InvalidConfigError(
            f"environment has {env.num_envs} instances, trainer expects {config.num_envs}", key="trainer.num_envs"
        )
    torch.set_num_threads(config.torch_threads)
    torch.manual_seed(config.seed)
    generator = torch.Generator().manual_seed(config.seed)
    model = build_model(config, env)
    optimizer = torch.optim.Adam(model.parameters(), lr=config.learning_rate)
    obs_norm, privileged_norm = build_normalizers(config, env)
    settings = config.ppo_settings()
    arch = architecture(config, env)
    out = Path(out_dir) if out_dir is not None else None
    result = TrainResult(model, env.curriculum, obs_norm, privileged_norm)
    term_columns: list[str] | None = None

    def checkpoint(iteration: int) -> None:
        if out is None:
            return
        path = out / "checkpoints" / f"ckpt_{iteration:06d}.npz"
        save_checkpoint(
            path,
            model,
            architecture=arch,
            curriculum=env.curriculum.as_dict(),
            iteration=iteration,
            normalizers={"obs": obs_norm.state(), "privileged": privileged_norm.state()},
            config=run_config or {"trainer": dataclasses.asdict(config)},
        )
        result.checkpoints.append(path)

    checkpoint(0)
    if out is not None:
        write_csv(out / "metrics.csv", list(METRIC_COLUMNS), [])
    state = RolloutState.start(env)
    window: list[float] = []
    for iteration in range(1, config.max_iterations + 1):
        batch, stats = collect_rollouts(
            env, model, state, config.horizon, obs_norm, privileged_norm, config.discount, generator
        )
        advantages, returns = compute_gae(
            batch.rewards, batch.values, batch.dones, batch.last_values, config.discount, config.gae_lambda
        )
        if config.normalize_advantages:
            advantages = normalize_advantages(advantages, batch.valid)
        update_stats = ppo_update(model, optimizer, batch.flat(advantages, returns), settings, generator)
        if not _finite_parameters(model):
            raise TrainingFault(f"non-finite parameters after iteration {iteration}; last good checkpoint kept",
                                diagnostics=update_stats)

        window.append(stats.mean_tracking_reward)
        fired = False
        if iteration % config.curriculum_interval == 0:
            new_state, fired = curriculum_update(env.curriculum, float(np.mean(window)), TRACKING_REWARD_MAX)
            env.set_curriculum(new_state)
            window = []

        row = {
            "iteration": iteration,
            "env_steps": iteration * config.batch_size,
            "mean_reward": stats.mean_reward,
            "mean_tracking_reward": stats.mean_tracking_reward,
            "v_max": env.curriculum.v_max,
            "cycle_time": env.curriculum.cycle_time,
            "gate_fired": fired,
            "mean_abs_Lz": stats.mean_abs_momentum_z,
            "falls": stats.falls,
            "timeouts": stats.timeouts,
            "faults": stats.faults,
            **{k: update_stats[k] for k in ("policy_loss", "value_loss", "entropy", "approx_kl",
                                            "clip_fraction", "learning_rate")},
        }
        if term_columns is None:
            term_columns = [f"term/{k}" for k in sorted(stats.term_means)]
        row.update({f"term/{k}": v for k, v in stats.term_means.items()})
        result.metrics.append(row)
        if out is not None:
            write_csv(out / "metrics.csv", list(METRIC_COLUMNS) + term_columns, result.metrics)
        if progress is not None:
            progress(row)
        if iteration % config.checkpoint_interval == 0 or iteration == config.max_iterations:
            checkpoint(iteration)
    result.curriculum = env.curriculum
    return result
