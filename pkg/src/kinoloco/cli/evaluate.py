"""Deterministic-policy evaluation over a commanded-velocity grid.

A fallen episode contributes 0 m/s to its grid point's mean velocity. Tracking
error per episode is ``|v_episode - v_cmd|`` with the same convention.
"""

from __future__ import annotations

import csv
import io
import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from kinoloco.env.base import FAULT, FELL, RUNNING, TERMINATION_NAMES
from kinoloco.kinodyn import GROUPS
from kinoloco.trainer.checkpoint import atomic_write_bytes
from kinoloco.trainer.loop import format_value
from kinoloco.trainer.ppo import act

TRAJECTORY_SCHEMA_VERSION = 1


@dataclass
class EpisodeRecord:
    command: float
    mean_velocity: float  # raw mean forward velocity over the episode
    fell: bool
    steps: int
    mean_abs_lz: float
    group_norms: dict[str, float] = field(default_factory=dict)
    group_lz: dict[str, float] = field(default_factory=dict)

    @property
    def scored_velocity(self) -> float:
        return 0.0 if self.fell else self.mean_velocity


REPORT_COLUMNS = (
    ["command", "mean_velocity", "std_velocity", "fall_rate", "tracking_error", "mean_abs_Lz", "episodes"]
    + [f"norm_L_{g}" for g in GROUPS]
    + [f"abs_Lz_{g}" for g in GROUPS]
)


@dataclass
class EvaluationReport:
    rows: list[dict]

    def row(self, command: float) -> dict:
        for r in self.rows:
            if r["command"] == command:
                return r
        raise KeyError(command)

    def to_csv(self) -> str:
        buffer = io.StringIO()
        writer = csv.writer(buffer, lineterminator="\n")
        writer.writerow(REPORT_COLUMNS)
        for r in self.rows:
            writer.writerow([format_value(r[c]) for c in REPORT_COLUMNS])
        return buffer.getvalue()

    def write(self, path: str | Path) -> None:
        atomic_write_bytes(path, self.to_csv().encode())

    @classmethod
    def read(cls, path: str | Path) -> "EvaluationReport":
        with open(path, newline="") as fh:
            rows = [{k: float(v) for k, v in r.items()} for r in csv.DictReader(fh)]
        return cls(rows)


def summarize(grid, per_seed: list[list[EpisodeRecord]]) -> EvaluationReport:
    """Aggregate episodes into one row per grid point.

    With several seeds the velocity std is taken across per-seed means, otherwise
    across episodes.
    """
    rows = []
    for command in grid:
        seed_means = []
        episodes = []
        for records in per_seed:
            mine = [r for r in records if r.command == command]
            episodes.extend(mine)
            if mine:
                seed_means.append(float(np.mean([r.scored_velocity for r in mine])))
        scored = [r.scored_velocity for r in episodes]
        spread = seed_means if len(per_seed) > 1 else scored
        row = {
            "command": float(command),
            "mean_velocity": float(np.mean(seed_means)) if seed_means else 0.0,
            "std_velocity": float(np.std(spread)) if spread else 0.0,
            "fall_rate": float(np.mean([r.fell for r in episodes])) if episodes else 0.0,
            "tracking_error": float(np.mean([abs(v - command) for v in scored])) if scored else 0.0,
            "mean_abs_Lz": float(np.mean([r.mean_abs_lz for r in episodes])) if episodes else 0.0,
            "episodes": len(episodes),
        }
        for g in GROUPS:
            row[f"norm_L_{g}"] = float(np.mean([r.group_norms.get(g, 0.0) for r in episodes])) if episodes else 0.0
            row[f"abs_Lz_{g}"] = float(np.mean([r.group_lz.get(g, 0.0) for r in episodes])) if episodes else 0.0
        rows.append(row)
    return EvaluationReport(rows)


def _entry(value, e: int) -> float:
    value = np.asarray(value, dtype=float)
    return float(value if value.ndim == 0 else value[e])


def _trajectory_record(info: dict, e: int, episode: int, t: float, termination: int) -> dict:
    def arr(name):
        return np.asarray(info[name][e]).tolist() if name in info else None

    record = {
        "schema_version": TRAJECTORY_SCHEMA_VERSION,
        "episode": episode,
        "time": t,
        "command": arr("commands"),
        "base_position": arr("base_position"),
        "base_quaternion": arr("base_quaternion"),
        "base_twist_world": arr("base_twist_world"),
        "base_velocity": arr("base_velocity"),
        "joint_positions": arr("joint_positions"),
        "joint_velocities": arr("joint_velocities"),
        "actions": arr("actions"),
        "reward": {k: _entry(v, e) for k, v in info.get("reward_weighted", {}).items()},
        "termination": TERMINATION_NAMES[int(termination)],
    }
    if "reward_total_unscaled" in info:
        record["reward"]["total"] = float(info["reward_total_unscaled"][e])
    if "momentum" in info:
        record["momentum"] = {
            "total": info["momentum"][e].tolist(),
            "per_group": {g: info["group_momentum"][g][e].tolist() for g in GROUPS},
        }
    return record


def run_episodes(env, model, obs_norm, grid, episodes_per_point: int, trajectory_path: str | Path | None = None):
    """Roll out one episode per env, env ``i`` commanded ``grid[i // episodes_per_point]``."""
    commands = np.repeat(np.asarray(grid, dtype=float), episodes_per_point)
    if env.num_envs != len(commands):
        raise ValueError(f"environment count {env.num_envs} != {len(commands)} grid episodes")
    command_vectors = np.zeros((len(commands), 3))
    command_vectors[:, 0] = commands
    env.set_command(command_vectors)
    obs, _ = env.reset()
    n = env.num_envs
    alive = np.ones(n, dtype=bool)
    fell = np.zeros(n, dtype=bool)
    steps = np.zeros(n, dtype=np.int64)
    vel_sum = np.zeros(n)
    lz_sum = np.zeros(n)
    group_norm_sum = {g: np.zeros(n) for g in GROUPS}
    group_lz_sum = {g: np.zeros(n) for g in GROUPS}
    log_env = np.zeros(n, dtype=bool)
    log_env[::episodes_per_point] = True
    lines: list[str] = []
    while alive.any():
        actions, _ = act(model, obs_norm.normalize(obs).astype(np.float32), deterministic=True)
        result = env.step(actions)
        info = result.info
        vel_sum[alive] += info["base_velocity"][alive, 0]
        steps[alive] += 1
        if "momentum" in info:
            lz_sum[alive] += np.abs(info["momentum"][alive, 2])
            for g in GROUPS:
                group_norm_sum[g][alive] += np.linalg.norm(info["group_momentum"][g][alive], axis=1)
                group_lz_sum[g][alive] += np.abs(info["group_momentum"][g][alive, 2])
        if trajectory_path is not None:
            for e in np.flatnonzero(alive & log_env):
                t = float(steps[e] * env.control_dt)
                lines.append(json.dumps(_trajectory_record(info, e, int(e), t, result.termination[e])))
        ended = alive & (result.termination != RUNNING)
        fell |= ended & np.isin(result.termination, (FELL, FAULT))
        alive &= ~ended
        obs = result.obs
    if trajectory_path is not None:
        atomic_write_bytes(trajectory_path, ("\n".join(lines) + "\n").encode())
    records = []
    for e in range(n):
        k = max(int(steps[e]), 1)
        records.append(
            EpisodeRecord(
                command=float(commands[e]),
                mean_velocity=float(vel_sum[e] / k),
                fell=bool(fell[e]),
                steps=int(steps[e]),
                mean_abs_lz=float(lz_sum[e] / k),
                group_norms={g: float(group_norm_sum[g][e] / k) for g in GROUPS},
                group_lz={g: float(group_lz_sum[g][e] / k) for g in GROUPS},
            )
        )
    return records


def read_trajectories(path: str | Path) -> list[dict]:
    with open(path) as fh:
        records = [json.loads(line) for line in fh if line.strip()]
    for r in records:
        if r.get("schema_version") != TRAJECTORY_SCHEMA_VERSION:
            raise ValueError(f"unsupported trajectory schema {r.get('schema_version')!r}")
    return records
