"""Seeded convergence study on the iris fixture.

Runs the search for a range of seeds and reports how many reach the
exhaustive optimum and after how many evaluations. Optionally writes the
per-iteration best quality of every run to CSV.

    python scripts/convergence_study.py --seeds 20 --config configs/iris.toml --csv runs.csv
"""

import argparse
import csv
import time
from pathlib import Path

import numpy as np
import tomli

from stratheda.bethel import BethelOptions
from stratheda.frame import load_basic_strata
from stratheda.heda import HedaConfig, run_heda
from stratheda.oracle import grid_search

ROOT = Path(__file__).resolve().parents[1]


def load_config(path):
    with open(path, "rb") as fh:
        raw = tomli.load(fh)
    bethel = raw.pop("bethel", {})
    raw.update(raw.pop("heda", {}))
    return HedaConfig.from_mapping(raw), BethelOptions(**bethel)


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--config", type=Path, default=ROOT / "configs" / "iris.toml")
    ap.add_argument("--seeds", type=int, default=20)
    ap.add_argument("--iterations", type=int, default=None)
    ap.add_argument("--csv", type=Path, default=None)
    args = ap.parse_args()

    base, options = load_config(args.config)
    if args.iterations is not None:
        base = HedaConfig.from_mapping({**base.to_dict(), "iterations": args.iterations})
    inst = load_basic_strata(ROOT / "data" / "iris_strata.csv", ROOT / "data" / "iris_cv.csv")
    target = grid_search(inst, options=options).quality
    print(f"exhaustive optimum: {target:.4f}")

    histories, hits = [], []
    t0 = time.perf_counter()
    for seed in range(args.seeds):
        report = run_heda(inst, HedaConfig.from_mapping({**base.to_dict(), "seed": seed}), options=options)
        at = report.evaluations_to(target * (1 + 1e-9))
        hits.append(at)
        histories.append(report.history)
        print(f"seed {seed:3d}: best {report.best.quality:.4f}  evals {report.evaluation_count:6d}  "
              f"to optimum {at if at is not None else '-'}")
    elapsed = time.perf_counter() - t0

    found = [h for h in hits if h is not None]
    print(f"\nreached optimum: {len(found)}/{args.seeds}")
    if found:
        print(f"evaluations to optimum: mean {np.mean(found):.1f}, median {np.median(found):.0f}, max {max(found)}")
    print(f"wall time: {elapsed:.1f}s")

    if args.csv:
        with open(args.csv, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["seed", "iteration", "best"])
            for seed, h in enumerate(histories):
                w.writerows((seed, i, repr(q)) for i, q in enumerate(h))


if __name__ == "__main__":
    main()
