"""Step through one generation of the search on the iris fixture.

Prints the five-member population, the elite, the marginal model, a few
offspring drawn from it, and the exhaustive optimum for comparison.

    python scripts/iris_walkthrough.py [--clamp post|in_loop] [--seed 0]
"""

import argparse
from pathlib import Path

import numpy as np

from stratheda.bethel import BethelOptions, Evaluator
from stratheda.heda import Member, build_model, sample_model, select_elite, sort_members
from stratheda.frame import load_basic_strata
from stratheda.oracle import grid_search

DATA = Path(__file__).resolve().parents[1] / "data"

POPULATION = [
    [3, 2, 2, 3, 2, 1, 2, 2],
    [3, 2, 4, 3, 2, 1, 2, 3],
    [3, 2, 4, 1, 2, 1, 2, 4],
    [3, 2, 4, 3, 2, 1, 1, 4],
    [3, 3, 2, 3, 2, 1, 2, 2],
]


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--clamp", default="post", choices=("post", "in_loop"))
    ap.add_argument("--seed", type=int, default=0)
    ap.add_argument("--offspring", type=int, default=3)
    args = ap.parse_args()

    inst = load_basic_strata(DATA / "iris_strata.csv", DATA / "iris_cv.csv")
    ev = Evaluator(inst, options=BethelOptions(clamp=args.clamp))
    ids = " ".join(f"{i:>2}" for i in inst.ids)

    print(f"basic strata: {ids}")
    pop = [Member(np.array(p), ev(p)) for p in POPULATION]
    for m in pop:
        print(f"  {' '.join(f'{x:>2}' for x in m.labels)}   n = {m.quality:8.4f}")

    # keep raw labels so the model rows match the population's own numbering
    elite = select_elite(sort_members(pop), 0.4)
    print("\nelite:")
    for m in elite:
        print(f"  {' '.join(f'{x:>2}' for x in m.labels)}   n = {m.quality:8.4f}")

    model = build_model(elite)
    print("\nmodel (rows = stratum label, columns = basic stratum):")
    for k, row in enumerate(model.probs, 1):
        print(f"  {k}: " + " ".join(f"{p:4.2f}" for p in row))

    rng = np.random.default_rng(args.seed)
    print("\noffspring:")
    for lab in sample_model(model, args.offspring, rng):
        print(f"  {' '.join(f'{x:>2}' for x in lab)}   n = {ev(lab):8.4f}")

    best = grid_search(inst, options=BethelOptions(clamp=args.clamp))
    print(f"\nexhaustive optimum over {best.evaluated} partitions: "
          f"{' '.join(str(x) for x in best.labels)}   n = {best.quality:.4f}")


if __name__ == "__main__":
    main()
