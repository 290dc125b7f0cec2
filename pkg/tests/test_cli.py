import csv
import dataclasses
import json

import numpy as np
import pytest

from kinoloco.cli import main
from kinoloco.cli.config import (
    SIM2SIM_PROFILES,
    RunConfig,
    apply_toggles,
    dumps,
    load,
    loads,
    resolve_profile,
)
from kinoloco.cli.evaluate import EpisodeRecord, EvaluationReport, read_trajectories, summarize
from kinoloco.cli.main import parse_grid, parse_toggle_sets, sim2sim_table
from kinoloco.cli.plots import PlotInputError, plot_run
from kinoloco.errors import InvalidConfigError

POINTMASS_YAML = """
task: pointmass
seeds: [0]
trainer: {num_envs: 4, horizon: 8, minibatch_size: 16, epochs: 1, max_iterations: 2,
          actor_hidden: [8], critic_hidden: [8], checkpoint_interval: 1}
evaluation: {grid: [0.0, 0.5], episodes_per_point: 2, episode_length_s: 1.0}
"""

HUMANOID_YAML = """
task: humanoid
seeds: [0]
trainer: {num_envs: 2, horizon: 4, minibatch_size: 8, epochs: 1, max_iterations: 1,
          actor_hidden: [8], critic_hidden: [8], checkpoint_interval: 1}
evaluation: {grid: [0.0, 1.0], episodes_per_point: 1, episode_length_s: 0.3}
"""


@pytest.fixture
def pointmass_run(tmp_path):
    cfg = tmp_path / "pm.yaml"
    cfg.write_text(POINTMASS_YAML)
    out = tmp_path / "runs"
    assert main(["train", "--config", str(cfg), "--out", str(out)]) == 0
    return cfg, out / "seed_0"


class TestConfig:
    def test_round_trip(self):
        cfg = apply_toggles(RunConfig(), ("arms_locked", "no_angular_momentum"))
        assert loads(dumps(cfg)) == cfg

    def test_default_file_matches_defaults(self):
        assert load("configs/default.yaml") == RunConfig()

    def test_partial_file_fills_defaults(self, tmp_path):
        path = tmp_path / "c.yaml"
        path.write_text("trainer: {num_envs: 8, horizon: 10, minibatch_size: 40}\n")
        cfg = load(path)
        assert cfg.trainer.num_envs == 8 and cfg.env.num_envs == 8
        assert cfg.weights == RunConfig().weights

    def test_unknown_key_names_path(self):
        with pytest.raises(InvalidConfigError, match="trainer.bogus"):
            loads("trainer: {bogus: 1}\n")

    def test_bad_type(self):
        with pytest.raises(InvalidConfigError, match="trainer.num_envs"):
            loads("trainer: {num_envs: many}\n")

    def test_toggles(self):
        cfg = apply_toggles(RunConfig(), ("no_angular_momentum", "fixed_cycle_time", "no_velocity_scaling"))
        assert cfg.weights.alpha_a == 0.0
        assert not cfg.curriculum.cycle_enabled
        assert not cfg.reward_constants.velocity_scaling
        with pytest.raises(InvalidConfigError, match="valid toggles"):
            apply_toggles(RunConfig(), ("nope",))

    def test_toggle_sets(self):
        assert parse_toggle_sets("arms_locked;no_angular_momentum,arms_locked") == [
            (), ("arms_locked",), ("no_angular_momentum", "arms_locked")]
        assert parse_toggle_sets(None) == [()]

    def test_grid(self):
        assert parse_grid("0, 0.5,1") == (0.0, 0.5, 1.0)
        with pytest.raises(InvalidConfigError):
            parse_grid("a,b")

    def test_profiles(self, tmp_path):
        assert resolve_profile("perturbed") == SIM2SIM_PROFILES["perturbed"]
        path = tmp_path / "p.yaml"
        path.write_text("friction_scale: 0.5\n")
        assert resolve_profile(str(path)) == {"friction_scale": 0.5}
        path.write_text("frictoin_scale: 0.5\n")
        with pytest.raises(InvalidConfigError):
            resolve_profile(str(path))
        with pytest.raises(InvalidConfigError):
            resolve_profile("nonexistent-profile")


class TestEvaluation:
    def test_fall_scores_zero(self):
        records = [
            EpisodeRecord(1.0, 0.9, False, 10, 0.1),
            EpisodeRecord(1.0, 0.8, True, 5, 0.3),
        ]
        row = summarize([1.0], [records]).row(1.0)
        assert row["mean_velocity"] == pytest.approx(0.45)
        assert row["fall_rate"] == 0.5
        assert row["tracking_error"] == pytest.approx((0.1 + 1.0) / 2)
        assert row["std_velocity"] == pytest.approx(0.45)

    def test_std_across_seeds(self):
        seeds = [[EpisodeRecord(1.0, v, False, 10, 0.0)] * 2 for v in (0.8, 1.0, 1.2)]
        row = summarize([1.0], seeds).row(1.0)
        assert row["mean_velocity"] == pytest.approx(1.0)
        assert row["std_velocity"] == pytest.approx(np.std([0.8, 1.0, 1.2]))

    def test_report_csv_round_trip(self, tmp_path):
        report = summarize([0.0, 1.0], [[EpisodeRecord(0.0, 0.1, False, 3, 0.2),
                                         EpisodeRecord(1.0, 0.7, False, 3, 0.5)]])
        report.write(tmp_path / "r.csv")
        assert EvaluationReport.read(tmp_path / "r.csv").rows == report.rows

    def test_sim2sim_deltas(self):
        a = summarize([1.0], [[EpisodeRecord(1.0, 1.0, False, 3, 0.2)]])
        b = summarize([1.0], [[EpisodeRecord(1.0, 0.75, False, 3, 0.5)]])
        row = next(csv.DictReader(sim2sim_table(a, b).splitlines()))
        assert float(row["delta_mean_velocity"]) == pytest.approx(-0.25)
        assert float(row["delta_mean_abs_Lz"]) == pytest.approx(0.3)


class TestCommands:
    def test_train_layout(self, pointmass_run):
        _, run = pointmass_run
        assert (run / "config.yaml").is_file()
        assert load(run / "config.yaml").trainer.seed == 0
        assert sorted(p.name for p in (run / "checkpoints").iterdir()) == [
            "ckpt_000000.npz", "ckpt_000001.npz", "ckpt_000002.npz"]

    def test_eval_and_plot(self, pointmass_run, capsys):
        _, run = pointmass_run
        ckpt = run / "checkpoints" / "ckpt_000002.npz"
        assert main(["eval", "--checkpoint", str(ckpt), "--out", str(run)]) == 0
        report = EvaluationReport.read(run / "eval_report.csv")
        assert [r["command"] for r in report.rows] == [0.0, 0.5]
        assert all(r["episodes"] == 2 for r in report.rows)
        assert (run / "velocity_tracking.png").is_file()
        traj = read_trajectories(run / "trajectories.jsonl")
        assert {r["episode"] for r in traj} == {0, 2}
        assert main(["plot", str(run)]) == 0
        with open(run / "plots" / "learning_curve.csv") as fh:
            plotted = list(csv.DictReader(fh))
        with open(run / "metrics.csv") as fh:
            logged = list(csv.DictReader(fh))
        assert [r["mean_reward"] for r in plotted] == [r["mean_reward"] for r in logged]
        assert (run / "plots" / "velocity_tracking.csv").is_file()
        capsys.readouterr()

    def test_eval_is_deterministic(self, pointmass_run, tmp_path):
        _, run = pointmass_run
        ckpt = str(run / "checkpoints" / "ckpt_000002.npz")
        assert main(["eval", "--checkpoint", ckpt, "--out", str(tmp_path / "a")]) == 0
        assert main(["eval", "--checkpoint", ckpt, "--out", str(tmp_path / "b")]) == 0
        assert (tmp_path / "a" / "eval_report.csv").read_text() == (tmp_path / "b" / "eval_report.csv").read_text()

    def test_out_from_environment(self, tmp_path, monkeypatch):
        cfg = tmp_path / "pm.yaml"
        cfg.write_text(POINTMASS_YAML)
        monkeypatch.setenv("KINOLOCO_OUT", str(tmp_path / "envout"))
        assert main(["train", "--config", str(cfg), "--seed", "3"]) == 0
        assert (tmp_path / "envout" / "seed_3" / "metrics.csv").is_file()

    def test_humanoid_round_trip(self, tmp_path):
        cfg = tmp_path / "h.yaml"
        cfg.write_text(HUMANOID_YAML)
        out = tmp_path / "h"
        assert main(["train", "--config", str(cfg), "--out", str(out)]) == 0
        ckpt = str(out / "seed_0" / "checkpoints" / "ckpt_000001.npz")
        assert main(["eval", "--checkpoint", ckpt, "--out", str(out / "eval")]) == 0
        traj = read_trajectories(out / "eval" / "trajectories.jsonl")
        first = traj[0]
        assert first["schema_version"] == 1
        assert len(first["joint_positions"]) == 16 and len(first["base_quaternion"]) == 4
        assert set(first["momentum"]["per_group"]) == {"left_arm", "right_arm", "left_leg", "right_leg", "torso"}
        assert "r_a" in first["reward"]
        assert (out / "eval" / "momentum_traces.png").is_file()
        assert main(["sim2sim", "--checkpoint", ckpt, "--profile", "half_timestep", "--out", str(out / "s")]) == 0
        with open(out / "s" / "sim2sim.csv") as fh:
            rows = list(csv.DictReader(fh))
        assert [float(r["command"]) for r in rows] == [0.0, 1.0]

    def test_ablate_pointmass(self, tmp_path):
        cfg = tmp_path / "pm.yaml"
        cfg.write_text(POINTMASS_YAML)
        out = tmp_path / "abl"
        assert main(["ablate", "--config", str(cfg), "--toggles", "no_angular_momentum", "--out", str(out)]) == 0
        with open(out / "ablation.csv") as fh:
            rows = list(csv.DictReader(fh))
        assert [r["toggles"] for r in rows] == ["baseline"] * 2 + ["no_angular_momentum"] * 2
        assert "abs_Lz_left_arm" in rows[0]


class TestFailures:
    def test_unknown_config_key_exit_code(self, tmp_path, capsys):
        path = tmp_path / "bad.yaml"
        path.write_text("trainer: {numenvs: 4}\n")
        assert main(["train", "--config", str(path), "--out", str(tmp_path)]) != 0
        assert "trainer.numenvs" in capsys.readouterr().err

    def test_missing_checkpoint(self, tmp_path, capsys):
        assert main(["eval", "--checkpoint", str(tmp_path / "none.npz"), "--out", str(tmp_path)]) != 0
        assert "none.npz" in capsys.readouterr().err

    def test_checkpoint_task_mismatch(self, pointmass_run, tmp_path, capsys):
        _, run = pointmass_run
        cfg = tmp_path / "h.yaml"
        cfg.write_text(HUMANOID_YAML)
        ckpt = run / "checkpoints" / "ckpt_000002.npz"
        assert main(["eval", "--checkpoint", str(ckpt), "--config", str(cfg), "--out", str(tmp_path)]) != 0
        assert "mismatch" in capsys.readouterr().err

    def test_unknown_toggle(self, tmp_path, capsys):
        assert main(["ablate", "--toggles", "arms_unlocked", "--out", str(tmp_path)]) != 0
        assert "valid toggles" in capsys.readouterr().err

    def test_plot_missing_metrics(self, tmp_path, capsys):
        with pytest.raises(PlotInputError, match="metrics.csv"):
            plot_run(tmp_path)
        assert main(["plot", str(tmp_path)]) != 0
        assert "metrics.csv" in capsys.readouterr().err

    def test_plot_empty_metrics(self, tmp_path):
        (tmp_path / "metrics.csv").write_text("iteration,env_steps\n")
        with pytest.raises(PlotInputError, match="no data rows"):
            plot_run(tmp_path)

    def test_trajectory_schema_check(self, tmp_path):
        path = tmp_path / "t.jsonl"
        path.write_text(json.dumps({"schema_version": 99}) + "\n")
        with pytest.raises(ValueError, match="schema"):
            read_trajectories(path)


def test_run_config_with_seed():
    cfg = RunConfig().with_seed(7)
    assert cfg.trainer.seed == 7
    assert dataclasses.replace(cfg, seeds=(1,)).seeds == (1,)
