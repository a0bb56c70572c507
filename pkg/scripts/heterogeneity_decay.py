"""Track heterogeneity and the time spread over rounds for several sigmas.

    python scripts/heterogeneity_decay.py --sigmas 2,5,10,20 --out runs/decay
"""

import argparse
from pathlib import Path

from adaptcl.config import ExperimentConfig
from adaptcl.env import predicted_heterogeneity
from adaptcl.metrics import emit_metrics
from adaptcl.runner import pruning_events_until_balanced, run_experiment


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--sigmas", default="2,5,10,20")
    ap.add_argument("--rounds", type=int, default=60)
    ap.add_argument("--seed", type=int, default=0)
    ap.add_argument("--out", default="runs/decay")
    args = ap.parse_args()

    print(f"{'sigma':>6} {'H pred':>7} {'H r1':>7} {'H end':>7} {'ratio end':>9} {'events':>6}")
    for sigma in (float(s) for s in args.sigmas.split(",")):
        cfg = ExperimentConfig(sigma=sigma, rounds=args.rounds, seed=args.seed)
        r = run_experiment(cfg)
        emit_metrics(r, Path(args.out), f"decay_sigma{sigma:g}")
        last = r.rounds[-1]
        print(f"{sigma:6g} {predicted_heterogeneity(sigma, cfg.workers):7.3f} "
              f"{r.rounds[0].H:7.3f} {last.H:7.3f} {max(last.phi) / min(last.phi):9.3f} "
              f"{pruning_events_until_balanced(r)!s:>6}")


if __name__ == "__main__":
    main()
