"""Plot and table emission from a run directory. Tables copy logged values verbatim."""

from __future__ import annotations

import csv
import io
from pathlib import Path

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402

from kinoloco.kinodyn import GROUPS  # noqa: E402
from kinoloco.trainer.checkpoint import atomic_write_bytes  # noqa: E402

LEARNING_COLUMNS = ("iteration", "env_steps", "mean_reward", "mean_tracking_reward")
CURRICULUM_COLUMNS = ("iteration", "v_max", "cycle_time")
TRACKING_COLUMNS = ("command", "mean_velocity", "std_velocity", "fall_rate", "tracking_error")
MOMENTUM_COLUMNS = ("command", "mean_abs_Lz", *(f"abs_Lz_{g}" for g in GROUPS))


class PlotInputError(FileNotFoundError):
    pass


def _read_rows(path: Path) -> list[dict[str, str]]:
    if not path.is_file():
        raise PlotInputError(f"missing input file: {path}")
    with open(path, newline="") as fh:
        rows = list(csv.DictReader(fh))
    if not rows:
        raise PlotInputError(f"no data rows in {path}")
    return rows


def _write_table(path: Path, columns, rows) -> None:
    missing = [c for c in columns if c not in rows[0]]
    if missing:
        raise PlotInputError(f"columns {missing} not found for {path.name}")
    buffer = io.StringIO()
    writer = csv.writer(buffer, lineterminator="\n")
    writer.writerow(columns)
    for r in rows:
        writer.writerow([r[c] for c in columns])
    atomic_write_bytes(path, buffer.getvalue().encode())


def _save(fig, path: Path) -> None:
    buffer = io.BytesIO()
    fig.savefig(buffer, format="png", dpi=110, metadata={"Software": None})
    plt.close(fig)
    atomic_write_bytes(path, buffer.getvalue())


def _col(rows, name):
    return [float(r[name]) for r in rows]


def plot_run(run_dir: str | Path, out_dir: str | Path | None = None) -> list[Path]:
    """Emit plots and their data tables; returns the written paths."""
    run_dir = Path(run_dir)
    out = Path(out_dir) if out_dir else run_dir / "plots"
    written: list[Path] = []
    metrics = _read_rows(run_dir / "metrics.csv")

    _write_table(out / "learning_curve.csv", LEARNING_COLUMNS, metrics)
    fig, ax = plt.subplots(1, 2, figsize=(10, 3.5))
    ax[0].plot(_col(metrics, "env_steps"), _col(metrics, "mean_reward"))
    ax[0].set_xlabel("environment steps")
    ax[0].set_ylabel("mean step reward")
    ax[1].plot(_col(metrics, "env_steps"), _col(metrics, "mean_tracking_reward"))
    ax[1].set_xlabel("environment steps")
    ax[1].set_ylabel("mean tracking reward")
    fig.tight_layout()
    _save(fig, out / "learning_curve.png")
    written += [out / "learning_curve.csv", out / "learning_curve.png"]

    _write_table(out / "curriculum_trace.csv", CURRICULUM_COLUMNS, metrics)
    fig, ax = plt.subplots(figsize=(6, 3.5))
    ax.step(_col(metrics, "iteration"), _col(metrics, "v_max"), where="post", label="v_max [m/s]")
    ax2 = ax.twinx()
    ax2.step(_col(metrics, "iteration"), _col(metrics, "cycle_time"), where="post", color="tab:orange")
    ax.set_xlabel("iteration")
    ax.set_ylabel("v_max [m/s]")
    ax2.set_ylabel("cycle time [s]")
    fig.tight_layout()
    _save(fig, out / "curriculum_trace.png")
    written += [out / "curriculum_trace.csv", out / "curriculum_trace.png"]

    report_path = run_dir / "eval_report.csv"
    if report_path.is_file():
        report = _read_rows(report_path)
        _write_table(out / "velocity_tracking.csv", TRACKING_COLUMNS, report)
        cmd = _col(report, "command")
        fig, ax = plt.subplots(figsize=(5, 4))
        ax.errorbar(cmd, _col(report, "mean_velocity"), yerr=_col(report, "std_velocity"), marker="o")
        ax.plot(cmd, cmd, "k--", lw=0.8)
        ax.set_xlabel("commanded velocity [m/s]")
        ax.set_ylabel("achieved velocity [m/s] (fall = 0)")
        fig.tight_layout()
        _save(fig, out / "velocity_tracking.png")

        _write_table(out / "momentum_decomposition.csv", MOMENTUM_COLUMNS, report)
        fig, ax = plt.subplots(figsize=(6, 4))
        for g in GROUPS:
            ax.plot(cmd, _col(report, f"abs_Lz_{g}"), marker="o", label=g)
        ax.plot(cmd, _col(report, "mean_abs_Lz"), "k-", lw=2, label="total")
        ax.set_xlabel("commanded velocity [m/s]")
        ax.set_ylabel("mean |L_z| [kg m^2/s]")
        ax.legend(fontsize=8)
        fig.tight_layout()
        _save(fig, out / "momentum_decomposition.png")
        written += [out / n for n in ("velocity_tracking.csv", "velocity_tracking.png",
                                      "momentum_decomposition.csv", "momentum_decomposition.png")]
    return written
