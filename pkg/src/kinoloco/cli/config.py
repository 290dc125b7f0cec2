"""Declarative run configuration: YAML <-> nested frozen dataclasses with strict key checking."""

from __future__ import annotations

import dataclasses
import typing
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any

import yaml

from kinoloco.curriculum import CurriculumState
from kinoloco.env.humanoid import EnvConfig, PhysicsConfig
from kinoloco.env.pointmass import PointMassConfig
from kinoloco.env.randomization import DomainRandomizationConfig
from kinoloco.errors import InvalidConfigError
from kinoloco.rewards import GENERAL_TERMS, RewardConstants, RewardWeights
from kinoloco.trainer.loop import TrainerConfig

TASKS = ("humanoid", "pointmass")
TOGGLES = {
    "no_angular_momentum": "alpha_a = 0 (drop the angular-momentum reward)",
    "no_velocity_scaling": "use ratio 1 in the velocity-scaled reward terms",
    "arms_locked": "freeze the four arm joints at their defaults",
    "fixed_cycle_time": "disable the cycle-time curriculum",
}
DEFAULT_GRID = (0.0, 0.5, 1.0, 1.5, 2.0, 2.5, 3.0, 3.5)


@dataclass(frozen=True)
class EvalConfig:
    grid: tuple[float, ...] = DEFAULT_GRID
    episodes_per_point: int = 2
    episode_length_s: float = 10.0
    seed: int = 10_000
    log_trajectories: bool = True

    def __post_init__(self):
        object.__setattr__(self, "grid", tuple(float(v) for v in self.grid))
        if not self.grid:
            raise InvalidConfigError("velocity grid must be non-empty", key="evaluation.grid")
        if self.episodes_per_point < 1 or self.episode_length_s <= 0:
            raise InvalidConfigError("need >= 1 episode of positive length", key="evaluation.episodes_per_point")


SIM2SIM_PROFILES: dict[str, dict[str, Any]] = {
    "identity": {},
    "perturbed": {
        "dt": 0.0005,
        "decimation": 20,
        "contact_stiffness": 6.0e4,
        "contact_damping": 900.0,
        "friction_scale": 0.8,
        "mass_scale": 1.1,
    },
    "half_timestep": {"dt": 0.0005, "decimation": 20},
}


@dataclass(frozen=True)
class RunConfig:
    task: str = "humanoid"
    robot: str | None = None
    seeds: tuple[int, ...] = (0, 1, 2, 3, 4)
    output_dir: str = "runs"
    weights: RewardWeights = field(default_factory=RewardWeights)
    reward_constants: RewardConstants = field(default_factory=RewardConstants)
    curriculum: CurriculumState = field(default_factory=CurriculumState)
    domain_randomization: DomainRandomizationConfig = field(default_factory=DomainRandomizationConfig)
    env: EnvConfig = field(default_factory=EnvConfig)
    pointmass: PointMassConfig = field(default_factory=PointMassConfig)
    trainer: TrainerConfig = field(default_factory=TrainerConfig)
    evaluation: EvalConfig = field(default_factory=EvalConfig)

    def __post_init__(self):
        if self.task not in TASKS:
            raise InvalidConfigError(f"unknown task {self.task!r}; choose from {TASKS}", key="task")
        object.__setattr__(self, "seeds", tuple(int(s) for s in self.seeds))
        if not self.seeds:
            raise InvalidConfigError("at least one seed is required", key="seeds")
        unknown = set(self.weights.general_term_weights) - set(GENERAL_TERMS)
        if unknown:
            raise InvalidConfigError(f"unknown general terms {sorted(unknown)}", key="weights.general_term_weights")
        # The trainer owns the environment count.
        if self.env.num_envs != self.trainer.num_envs:
            object.__setattr__(self, "env", dataclasses.replace(self.env, num_envs=self.trainer.num_envs))
        if self.pointmass.num_envs != self.trainer.num_envs:
            object.__setattr__(
                self, "pointmass", dataclasses.replace(self.pointmass, num_envs=self.trainer.num_envs)
            )

    def with_seed(self, seed: int) -> "RunConfig":
        return dataclasses.replace(self, seeds=(int(seed),), trainer=dataclasses.replace(self.trainer, seed=int(seed)))


# -- codec --------------------------------------------------------------------------------


def _convert(tp, value, key: str):
    origin = typing.get_origin(tp)
    args = typing.get_args(tp)
    if dataclasses.is_dataclass(tp):
        if not isinstance(value, dict):
            raise InvalidConfigError(f"expected a mapping, got {type(value).__name__}", key=key)
        return from_dict(tp, value, key)
    if origin is typing.Union or str(origin) == "<class 'types.UnionType'>":
        if value is None and type(None) in args:
            return None
        inner = [a for a in args if a is not type(None)]
        return _convert(inner[0], value, key)
    if origin is tuple:
        if not isinstance(value, (list, tuple)):
            raise InvalidConfigError(f"expected a list, got {value!r}", key=key)
        elem = args[0] if args else Any
        return tuple(_convert(elem, v, f"{key}[{i}]") for i, v in enumerate(value))
    if origin is dict:
        if not isinstance(value, dict):
            raise InvalidConfigError(f"expected a mapping, got {value!r}", key=key)
        return {str(k): _convert(args[1], v, f"{key}.{k}") for k, v in value.items()}
    if tp is bool:
        if not isinstance(value, bool):
            raise InvalidConfigError(f"expected true/false, got {value!r}", key=key)
        return value
    if tp is int:
        if isinstance(value, bool) or not isinstance(value, int):
            raise InvalidConfigError(f"expected an integer, got {value!r}", key=key)
        return value
    if tp is float:
        if isinstance(value, bool) or not isinstance(value, (int, float)):
            raise InvalidConfigError(f"expected a number, got {value!r}", key=key)
        return float(value)
    if tp is str:
        if not isinstance(value, str):
            raise InvalidConfigError(f"expected a string, got {value!r}", key=key)
        return value
    return value


def from_dict(cls, data: dict | None, prefix: str = ""):
    """Build dataclass ``cls`` from a mapping, rejecting unknown keys with their dotted path."""
    data = data or {}
    hints = typing.get_type_hints(cls)
    names = {f.name for f in dataclasses.fields(cls) if f.init}
    unknown = set(data) - names
    if unknown:
        first = sorted(unknown)[0]
        where = f"{prefix}.{first}" if prefix else first
        raise InvalidConfigError(f"unknown keys {sorted(unknown)}; valid keys: {sorted(names)}", key=where)
    kwargs = {}
    for name, value in data.items():
        key = f"{prefix}.{name}" if prefix else name
        kwargs[name] = _convert(hints[name], value, key)
    try:
        return cls(**kwargs)
    except InvalidConfigError as exc:
        if prefix and exc.key and not exc.key.startswith(prefix):
            raise InvalidConfigError(str(exc).split(": ", 1)[-1], key=f"{prefix}.{exc.key}") from exc
        raise
    except (TypeError, ValueError) as exc:
        raise InvalidConfigError(str(exc), key=prefix or "config") from exc


def to_dict(obj) -> Any:
    if dataclasses.is_dataclass(obj):
        return {f.name: to_dict(getattr(obj, f.name)) for f in dataclasses.fields(obj) if f.init}
    if isinstance(obj, (tuple, list)):
        return [to_dict(v) for v in obj]
    if isinstance(obj, dict):
        return {k: to_dict(v) for k, v in obj.items()}
    return obj


def dumps(config: RunConfig) -> str:
    return yaml.safe_dump(to_dict(config), sort_keys=False, default_flow_style=None)


def loads(text: str) -> RunConfig:
    try:
        data = yaml.safe_load(text)
    except yaml.YAMLError as exc:
        raise InvalidConfigError(f"invalid YAML: {exc}", key="config") from exc
    if data is not None and not isinstance(data, dict):
        raise InvalidConfigError("top level must be a mapping", key="config")
    return from_dict(RunConfig, data)


def load(path: str | Path | None) -> RunConfig:
    if path is None:
        return RunConfig()
    path = Path(path)
    if not path.is_file():
        raise InvalidConfigError(f"no such config file: {path}", key="--config")
    return loads(path.read_text())


def apply_toggles(config: RunConfig, toggles: tuple[str, ...]) -> RunConfig:
    unknown = [t for t in toggles if t not in TOGGLES]
    if unknown:
        raise InvalidConfigError(
            f"unknown toggles {unknown}; valid toggles: {sorted(TOGGLES)}", key="--toggles"
        )
    for toggle in toggles:
        if toggle == "no_angular_momentum":
            config = dataclasses.replace(config, weights=dataclasses.replace(config.weights, alpha_a=0.0))
        elif toggle == "no_velocity_scaling":
            config = dataclasses.replace(
                config, reward_constants=dataclasses.replace(config.reward_constants, velocity_scaling=False)
            )
        elif toggle == "arms_locked":
            config = dataclasses.replace(config, env=dataclasses.replace(config.env, arms_locked=True))
        elif toggle == "fixed_cycle_time":
            config = dataclasses.replace(
                config, curriculum=dataclasses.replace(config.curriculum, cycle_enabled=False)
            )
    return config


def resolve_profile(spec: str) -> dict[str, Any]:
    """A named perturbation profile or a YAML file of ``PhysicsConfig`` overrides."""
    if spec in SIM2SIM_PROFILES:
        overrides = dict(SIM2SIM_PROFILES[spec])
    else:
        path = Path(spec)
        if not path.is_file():
            raise InvalidConfigError(
                f"unknown profile {spec!r}; use one of {sorted(SIM2SIM_PROFILES)} or a YAML file", key="--profile"
            )
        overrides = yaml.safe_load(path.read_text()) or {}
        if not isinstance(overrides, dict):
            raise InvalidConfigError("profile file must be a mapping", key="--profile")
    from_dict(PhysicsConfig, overrides, "profile")  # validates keys and values
    return overrides
