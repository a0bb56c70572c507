"""By-worker versus by-unit aggregation as the data become more label-skewed.

    python scripts/aggregation_noniid.py --levels 0,40,80 --seeds 3
"""

import argparse

import numpy as np

from adaptcl.config import ExperimentConfig
from adaptcl.runner import run_experiment


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--levels", default="0,40,80")
    ap.add_argument("--seeds", type=int, default=3)
    args = ap.parse_args()

    print(f"{'s':>4} {'by-worker':>10} {'by-unit':>10}")
    for s in (float(x) for x in args.levels.split(",")):
        acc = {}
        for rule in ("by-worker", "by-unit"):
            acc[rule] = np.mean([
                run_experiment(ExperimentConfig(noniid_s=s, aggregation=rule, seed=seed))
                .final_accuracy for seed in range(args.seeds)])
        print(f"{s:4g} {acc['by-worker']:10.4f} {acc['by-unit']:10.4f}")


if __name__ == "__main__":
    main()
