"""Time and accuracy of every policy on the blob task, averaged over seeds.

    python scripts/compare_policies.py --sigma 2 --seeds 3
"""

import argparse

import numpy as np

from adaptcl.config import POLICIES, ExperimentConfig
from adaptcl.runner import run_experiment


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--sigma", type=float, default=2.0)
    ap.add_argument("--seeds", type=int, default=3)
    ap.add_argument("--noniid", type=float, default=0.0)
    args = ap.parse_args()

    rows = {}
    for policy in POLICIES:
        accs, times = [], []
        for seed in range(args.seeds):
            cfg = ExperimentConfig(policy=policy, sigma=args.sigma, seed=seed,
                                   noniid_s=args.noniid)
            acc, t = run_experiment(cfg).reported
            accs.append(acc)
            times.append(t)
        rows[policy] = (np.mean(accs), np.mean(times))
    base = rows["fedavg-s"][1]
    print(f"{'policy':>11} {'acc':>7} {'time s':>9} {'speedup':>8}")
    for policy, (acc, t) in rows.items():
        print(f"{policy:>11} {acc:7.4f} {t:9.4f} {base / t:8.2f}")


if __name__ == "__main__":
    main()
