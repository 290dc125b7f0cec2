"""Momentum reward on vs off on the humanoid, paired by seed.

For each seed, trains with the configured ``alpha_a`` and with ``alpha_a = 0``
(everything else shared) for a fixed environment-step budget, evaluates both
final checkpoints, and compares mean |L_z| at the highest velocity both
curricula reached. Results go to ``results.json`` after every pair so an
interrupted run resumes where it stopped.

    python3 scripts/directional_ablation.py --out runs/directional
"""

from __future__ import annotations

import argparse
import dataclasses
import json
import logging
import time
from pathlib import Path

from kinoloco.cli.config import RunConfig, apply_toggles, load
from kinoloco.cli.evaluate import summarize
from kinoloco.cli.main import evaluate_checkpoint, train_seed

log = logging.getLogger("directional_ablation")
BUDGET = 5_000_000
SEEDS = (0, 1, 2, 3, 4)


def _arm(config: RunConfig, seed: int, run_dir: Path) -> dict:
    t0 = time.time()
    result = train_seed(config, seed, run_dir)
    return {
        "checkpoint": str(result.checkpoints[-1]),
        "v_max": result.curriculum.v_max,
        "cycle_time": result.curriculum.cycle_time,
        "env_steps": int(result.metrics[-1]["env_steps"]) if result.metrics else 0,
        "train_seconds": time.time() - t0,
    }


def _abs_lz(arm: dict, config: RunConfig, seed: int, velocity: float) -> tuple[float, float]:
    records, _ = evaluate_checkpoint(Path(arm["checkpoint"]), config.with_seed(seed), grid=(velocity,))
    row = summarize((velocity,), [records]).rows[0]
    return row["mean_abs_Lz"], row["fall_rate"]


def run_directional_ablation(
    out_dir: str | Path,
    config: RunConfig | None = None,
    seeds=SEEDS,
    budget_steps: int = BUDGET,
) -> dict:
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    config = config or RunConfig()
    per_iteration = config.trainer.num_envs * config.trainer.horizon
    iterations = budget_steps // per_iteration
    config = dataclasses.replace(config, trainer=dataclasses.replace(config.trainer, max_iterations=iterations))
    baseline = apply_toggles(config, ("no_angular_momentum",))
    results_path = out / "results.json"
    results = json.loads(results_path.read_text()) if results_path.is_file() else {}
    results.update(budget_steps=iterations * per_iteration, alpha_a=config.weights.alpha_a,
                   num_envs=config.trainer.num_envs)
    done = {p["seed"] for p in results.get("pairs", [])}
    results.setdefault("pairs", [])
    grid = config.evaluation.grid
    for seed in seeds:
        if seed in done:
            continue
        kslc = _arm(config, seed, out / "kslc" / f"seed_{seed}")
        base = _arm(baseline, seed, out / "no_momentum" / f"seed_{seed}")
        common = min(kslc["v_max"], base["v_max"])
        velocity = max(v for v in grid if v <= common + 1e-9)
        kslc_lz, kslc_fall = _abs_lz(kslc, config, seed, velocity)
        base_lz, base_fall = _abs_lz(base, baseline, seed, velocity)
        results["pairs"].append({
            "seed": seed,
            "initial_v_max": config.curriculum.v_max,
            "kslc_v_max": kslc["v_max"],
            "baseline_v_max": base["v_max"],
            "velocity": velocity,
            "kslc_abs_lz": kslc_lz,
            "baseline_abs_lz": base_lz,
            "kslc_fall_rate": kslc_fall,
            "baseline_fall_rate": base_fall,
            "kslc_train_seconds": kslc["train_seconds"],
            "baseline_train_seconds": base["train_seconds"],
        })
        results_path.write_text(json.dumps(results, indent=2))
        log.info("seed %d: |Lz| %.4f vs %.4f at %.1f m/s", seed, kslc_lz, base_lz, velocity)
    return results


def main() -> None:
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("--config", help="run configuration (defaults built in)")
    parser.add_argument("--out", default="runs/directional")
    parser.add_argument("--budget", type=int, default=BUDGET, help="environment steps per training run")
    parser.add_argument("--seeds", default=",".join(map(str, SEEDS)))
    args = parser.parse_args()
    logging.basicConfig(level=logging.INFO, format="%(asctime)s %(message)s")
    logging.getLogger("kinoloco").setLevel(logging.INFO)
    config = load(args.config) if args.config else RunConfig()
    seeds = tuple(int(s) for s in args.seeds.split(","))
    results = run_directional_ablation(args.out, config, seeds, args.budget)
    wins = sum(p["kslc_abs_lz"] < p["baseline_abs_lz"] for p in results["pairs"])
    print(f"{wins}/{len(results['pairs'])} pairs lower |L_z| with the momentum reward")
    print(f"results: {Path(args.out) / 'results.json'}")


if __name__ == "__main__":
    main()
