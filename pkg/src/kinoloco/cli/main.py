"""``kinoloco`` command line: train, eval, ablate, sim2sim, plot."""

from __future__ import annotations

import argparse
import csv
import dataclasses
import io
import logging
import os
import sys
from pathlib import Path

import numpy as np
import yaml

from kinoloco.cli import config as cfgmod
from kinoloco.cli.config import TOGGLES, RunConfig
from kinoloco.cli.evaluate import EvaluationReport, read_trajectories, run_episodes, summarize
from kinoloco.cli.factory import make_env, restore_policy
from kinoloco.cli.plots import PlotInputError, plot_run
from kinoloco.curriculum import CurriculumState
from kinoloco.errors import CheckpointError, InvalidConfigError, InvalidInputError, TrainingFault
from kinoloco.kinodyn import GROUPS
from kinoloco.trainer.checkpoint import atomic_write_bytes, load_checkpoint
from kinoloco.trainer.loop import format_value, train_loop

log = logging.getLogger("kinoloco")
OUT_ENV_VAR = "KINOLOCO_OUT"


def output_root(args_out: str | None, config: RunConfig) -> Path:
    if args_out:
        return Path(args_out)
    if os.environ.get(OUT_ENV_VAR):
        return Path(os.environ[OUT_ENV_VAR])
    return Path(config.output_dir)


def parse_grid(text: str | None) -> tuple[float, ...] | None:
    if text is None:
        return None
    try:
        grid = tuple(float(v) for v in text.split(",") if v.strip())
    except ValueError as exc:
        raise InvalidConfigError(f"cannot parse {text!r} as comma-separated numbers", key="--grid") from exc
    if not grid:
        raise InvalidConfigError("velocity grid must be non-empty", key="--grid")
    return grid


def parse_toggle_sets(text: str | None) -> list[tuple[str, ...]]:
    """``"a,b;c"`` -> ``[(), ("a", "b"), ("c",)]``; the empty baseline set always comes first."""
    sets: list[tuple[str, ...]] = [()]
    for chunk in (text or "").split(";"):
        names = tuple(t.strip() for t in chunk.split(",") if t.strip())
        unknown = [t for t in names if t not in TOGGLES]
        if unknown:
            raise InvalidConfigError(f"unknown toggles {unknown}; valid toggles: {sorted(TOGGLES)}", key="--toggles")
        if names and names not in sets:
            sets.append(names)
    return sets


# -- train --------------------------------------------------------------------------------


def train_seed(config: RunConfig, seed: int, run_dir: Path, quiet: bool = False):
    config = config.with_seed(seed)
    run_dir.mkdir(parents=True, exist_ok=True)
    atomic_write_bytes(run_dir / "config.yaml", cfgmod.dumps(config).encode())
    env = make_env(config, seed)

    def progress(row):
        if not quiet and (row["iteration"] % 10 == 0):
            log.info(
                "seed %d it %d steps %d r_trk %.3f v_max %.1f |Lz| %.3f",
                seed, row["iteration"], row["env_steps"], row["mean_tracking_reward"], row["v_max"],
                row["mean_abs_Lz"],
            )

    return train_loop(config.trainer, env, run_dir, run_config=cfgmod.to_dict(config), progress=progress)


def cmd_train(config: RunConfig, out: Path, seed: int | None = None) -> Path:
    seeds = (seed,) if seed is not None else config.seeds
    for s in seeds:
        train_seed(config, s, out / f"seed_{s}")
    return out


# -- eval ---------------------------------------------------------------------------------


def evaluate_checkpoint(
    checkpoint: Path,
    config: RunConfig | None = None,
    grid=None,
    seed: int | None = None,
    physics_overrides: dict | None = None,
    trajectory_path: Path | None = None,
):
    """Episode records for one checkpoint; the run configuration defaults to the one it embeds."""
    if config is None:
        meta_config = load_checkpoint(checkpoint).meta.get("config") or {}
        config = cfgmod.from_dict(RunConfig, meta_config) if "trainer" in meta_config else RunConfig()
    ev = config.evaluation
    grid = tuple(grid) if grid is not None else ev.grid
    probe = make_env(config, 0, num_envs=1, evaluation=True)
    model, obs_norm, _, ckpt = restore_policy(checkpoint, probe)
    curriculum = CurriculumState(**ckpt.curriculum)
    env = make_env(
        config,
        ev.seed if seed is None else seed,
        num_envs=len(grid) * ev.episodes_per_point,
        evaluation=True,
        physics_overrides=physics_overrides,
        episode_length_s=ev.episode_length_s,
        curriculum=curriculum,
    )
    return run_episodes(env, model, obs_norm, grid, ev.episodes_per_point, trajectory_path), grid


def _eval_plots(report: EvaluationReport, trajectories: list[dict] | None, out: Path) -> None:
    from kinoloco.cli.plots import _save, plt

    cmd = [r["command"] for r in report.rows]
    fig, ax = plt.subplots(figsize=(5, 4))
    ax.errorbar(cmd, [r["mean_velocity"] for r in report.rows], yerr=[r["std_velocity"] for r in report.rows],
                marker="o")
    ax.plot(cmd, cmd, "k--", lw=0.8)
    ax.set_xlabel("commanded velocity [m/s]")
    ax.set_ylabel("achieved velocity [m/s] (fall = 0)")
    fig.tight_layout()
    _save(fig, out / "velocity_tracking.png")
    if trajectories and any(r.get("momentum") for r in trajectories):
        fig, axes = plt.subplots(2, 1, figsize=(7, 5), sharex=True)
        episodes = sorted({r["episode"] for r in trajectories})
        for ep in episodes:
            recs = [r for r in trajectories if r["episode"] == ep and r.get("momentum")]
            if not recs:
                continue
            t = [r["time"] for r in recs]
            axes[0].plot(t, [r["momentum"]["total"][2] for r in recs], lw=0.8, label=f"v={recs[0]['command'][0]:.1f}")
            arms = [r["momentum"]["per_group"]["left_arm"][2] + r["momentum"]["per_group"]["right_arm"][2] for r in recs]
            legs = [r["momentum"]["per_group"]["left_leg"][2] + r["momentum"]["per_group"]["right_leg"][2] for r in recs]
            axes[1].plot(t, arms, lw=0.8, color="tab:blue")
            axes[1].plot(t, legs, lw=0.8, color="tab:red")
        axes[0].set_ylabel("total L_z")
        axes[1].set_ylabel("arms (blue) / legs (red) L_z")
        axes[1].set_xlabel("time [s]")
        axes[0].legend(fontsize=7, ncol=4)
        fig.tight_layout()
        _save(fig, out / "momentum_traces.png")


def cmd_eval(checkpoints: list[Path], out: Path, config: RunConfig | None = None, grid=None,
             seed: int | None = None) -> EvaluationReport:
    out.mkdir(parents=True, exist_ok=True)
    per_seed = []
    trajectories = None
    for i, ckpt in enumerate(checkpoints):
        traj = out / "trajectories.jsonl" if i == 0 else None
        if config is not None and not config.evaluation.log_trajectories:
            traj = None
        records, grid_used = evaluate_checkpoint(ckpt, config, grid, seed, trajectory_path=traj)
        per_seed.append(records)
        if traj is not None:
            trajectories = read_trajectories(traj)
    report = summarize(grid_used, per_seed)
    report.write(out / "eval_report.csv")
    _eval_plots(report, trajectories, out)
    return report


# -- sim2sim ------------------------------------------------------------------------------

SIM2SIM_FIELDS = ("mean_velocity", "std_velocity", "fall_rate", "tracking_error", "mean_abs_Lz")


def sim2sim_table(nominal: EvaluationReport, perturbed: EvaluationReport) -> str:
    columns = ["command"]
    for f in SIM2SIM_FIELDS:
        columns += [f"nominal_{f}", f"perturbed_{f}", f"delta_{f}"]
    buffer = io.StringIO()
    writer = csv.writer(buffer, lineterminator="\n")
    writer.writerow(columns)
    for a, b in zip(nominal.rows, perturbed.rows):
        row = [format_value(a["command"])]
        for f in SIM2SIM_FIELDS:
            row += [format_value(a[f]), format_value(b[f]), format_value(b[f] - a[f])]
        writer.writerow(row)
    return buffer.getvalue()


def cmd_sim2sim(checkpoint: Path, profile: str, out: Path, config: RunConfig | None = None, grid=None,
                seed: int | None = None) -> tuple[EvaluationReport, EvaluationReport]:
    overrides = cfgmod.resolve_profile(profile)
    out.mkdir(parents=True, exist_ok=True)
    nominal_records, grid_used = evaluate_checkpoint(checkpoint, config, grid, seed)
    perturbed_records, _ = evaluate_checkpoint(checkpoint, config, grid, seed, physics_overrides=overrides)
    nominal = summarize(grid_used, [nominal_records])
    perturbed = summarize(grid_used, [perturbed_records])
    nominal.write(out / "sim2sim_nominal.csv")
    perturbed.write(out / "sim2sim_perturbed.csv")
    atomic_write_bytes(out / "sim2sim.csv", sim2sim_table(nominal, perturbed).encode())
    atomic_write_bytes(out / "sim2sim_profile.yaml", yaml.safe_dump(overrides, sort_keys=True).encode())
    return nominal, perturbed


# -- ablate -------------------------------------------------------------------------------

ABLATION_COLUMNS = (
    ["toggles", "command", "mean_velocity", "std_velocity", "fall_rate", "tracking_error", "mean_abs_Lz"]
    + [f"abs_Lz_{g}" for g in GROUPS]
    + ["final_v_max", "final_cycle_time", "mean_weighted_r_a"]
)


def toggle_label(toggles: tuple[str, ...]) -> str:
    return "+".join(toggles) if toggles else "baseline"


def cmd_ablate(config: RunConfig, toggle_sets: list[tuple[str, ...]], out: Path, grid=None) -> list[dict]:
    rows = []
    for toggles in toggle_sets:
        label = toggle_label(toggles)
        variant = cfgmod.apply_toggles(config, toggles)
        set_dir = out / label
        per_seed, v_max, cycle, r_a = [], [], [], []
        for s in variant.seeds:
            result = train_seed(variant, s, set_dir / f"seed_{s}")
            records, grid_used = evaluate_checkpoint(result.checkpoints[-1], variant.with_seed(s), grid)
            per_seed.append(records)
            v_max.append(result.curriculum.v_max)
            cycle.append(result.curriculum.cycle_time)
            if result.metrics and "term/r_a" in result.metrics[-1]:
                r_a.append(variant.weights.alpha_a * result.metrics[-1]["term/r_a"])
        report = summarize(grid_used, per_seed)
        report.write(set_dir / "eval_report.csv")
        for r in report.rows:
            rows.append({
                "toggles": label,
                **{k: r[k] for k in ABLATION_COLUMNS[1:7]},
                **{f"abs_Lz_{g}": r[f"abs_Lz_{g}"] for g in GROUPS},
                "final_v_max": float(np.mean(v_max)),
                "final_cycle_time": float(np.mean(cycle)),
                "mean_weighted_r_a": float(np.mean(r_a)) if r_a else 0.0,
            })
    buffer = io.StringIO()
    writer = csv.writer(buffer, lineterminator="\n")
    writer.writerow(ABLATION_COLUMNS)
    for r in rows:
        writer.writerow([r["toggles"]] + [format_value(r[c]) for c in ABLATION_COLUMNS[1:]])
    atomic_write_bytes(out / "ablation.csv", buffer.getvalue().encode())
    return rows


# -- entry point --------------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="kinoloco", description=__doc__)
    parser.add_argument("-v", "--verbose", action="store_true", help="log training progress")
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p, checkpoint=False, checkpoints_many=False):
        p.add_argument("--config", help="run configuration YAML (defaults built in)")
        p.add_argument("--seed", type=int, help="override the seed")
        p.add_argument("--out", help=f"output directory (default ${OUT_ENV_VAR} or config output_dir)")
        if checkpoint:
            p.add_argument("--checkpoint", required=True, action="append" if checkpoints_many else "store",
                           help="checkpoint file" + (" (repeat for several seeds)" if checkpoints_many else ""))
            p.add_argument("--grid", help="comma-separated commanded velocities")

    common(sub.add_parser("train", help="train one run per seed"))
    common(sub.add_parser("eval", help="evaluate checkpoints over a velocity grid"), True, True)
    p = sub.add_parser("ablate", help="train and evaluate toggle sets side by side")
    common(p)
    p.add_argument("--toggles", default="", help=f"';'-separated sets of ','-separated toggles from {sorted(TOGGLES)}")
    p.add_argument("--grid", help="comma-separated commanded velocities")
    p = sub.add_parser("sim2sim", help="evaluate under nominal and perturbed physics")
    common(p, True)
    p.add_argument("--profile", default="perturbed", help="named profile or YAML of physics overrides")
    p = sub.add_parser("plot", help="emit plots and data tables for a run directory")
    p.add_argument("run_dir")
    p.add_argument("--out", help="plot directory (default RUN_DIR/plots)")
    return parser


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(message)s")
    try:
        if args.command == "plot":
            paths = plot_run(args.run_dir, args.out)
            print("\n".join(str(p) for p in paths))
            return 0
        config = cfgmod.load(args.config) if args.config else None
        effective = config or RunConfig()
        out = output_root(args.out, effective)
        if args.command == "train":
            print(cmd_train(effective, out, args.seed))
        elif args.command == "eval":
            report = cmd_eval([Path(c) for c in args.checkpoint], out, config, parse_grid(args.grid), args.seed)
            sys.stdout.write(report.to_csv())
        elif args.command == "sim2sim":
            nominal, perturbed = cmd_sim2sim(Path(args.checkpoint), args.profile, out, config,
                                             parse_grid(args.grid), args.seed)
            sys.stdout.write(sim2sim_table(nominal, perturbed))
        elif args.command == "ablate":
            if args.seed is not None:
                effective = dataclasses.replace(effective, seeds=(args.seed,))
            cmd_ablate(effective, parse_toggle_sets(args.toggles), out, parse_grid(args.grid))
            print(out / "ablation.csv")
        return 0
    except (InvalidConfigError, InvalidInputError, CheckpointError, TrainingFault, PlotInputError,
            FileNotFoundError) as exc:
        print(f"kinoloco {args.command}: error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
