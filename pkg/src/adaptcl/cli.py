"""Command line entry point: ``adaptcl run | sweep | ablate-prune``."""

from __future__ import annotations

import argparse
import csv
import itertools
import json
import logging
import sys
from pathlib import Path

from .config import ExperimentConfig, PRUNE_METHODS, POLICIES, load_config, parse_overrides
from .metrics import emit_metrics, summary
from .runner import run_experiment

log = logging.getLogger("adaptcl")


def _floats(text: str) -> list[float]:
    return [float(x) for x in text.split(",") if x.strip()]


def _base_config(args) -> ExperimentConfig:
    overrides = parse_overrides(dict(kv.split("=", 1) for kv in args.set))
    if args.seed is not None:
        overrides["seed"] = args.seed
    if getattr(args, "policy", None) is not None:
        overrides["policy"] = args.policy
    return load_config(args.config, **overrides)


def _tag(cfg: ExperimentConfig, extra: str = "") -> str:
    return f"{cfg.policy}_sigma{cfg.sigma:g}_seed{cfg.seed}{extra}"


def _run_with_baseline(cfg, out_dir, name, baseline_policy, cache):
    result = run_experiment(cfg)
    baseline = None
    if baseline_policy and baseline_policy != cfg.policy:
        key = (baseline_policy, cfg.sigma, cfg.seed)
        if key not in cache:
            bcfg = cfg.replace(policy=baseline_policy)
            cache[key] = run_experiment(bcfg)
            emit_metrics(cache[key], out_dir, _tag(bcfg))
        baseline = cache[key]
    emit_metrics(result, out_dir, name, baseline, baseline_policy)
    return summary(result, baseline, baseline_policy)


def cmd_run(args) -> int:
    cfg = _base_config(args)
    record = _run_with_baseline(cfg, args.out_dir, _tag(cfg), args.baseline, {})
    print(json.dumps(record, sort_keys=True))
    return 0


def _write_table(path: Path, rows: list[dict]):
    keys = sorted({k for r in rows for k in r})
    with path.open("w", newline="") as fh:
        writer = csv.DictWriter(fh, keys, lineterminator="\n")
        writer.writeheader()
        writer.writerows(rows)


def cmd_sweep(args) -> int:
    base = _base_config(args).replace(policy="adaptcl")
    cache: dict = {}
    rows = []
    for sigma, rho_max, gamma_min in itertools.product(
            _floats(args.sigmas), _floats(args.rho_max), _floats(args.gamma_min)):
        cfg = base.replace(sigma=sigma, rho_max=rho_max, gamma_min=gamma_min)
        name = _tag(cfg, f"_rho{rho_max:g}_gmin{gamma_min:g}")
        record = _run_with_baseline(cfg, args.out_dir, name, args.baseline, cache)
        record.update(rho_max=rho_max, gamma_min=gamma_min)
        rows.append(record)
        print(json.dumps(record, sort_keys=True))
    _write_table(Path(args.out_dir) / "sweep.csv", rows)
    return 0


def cmd_ablate(args) -> int:
    base = _base_config(args).replace(policy="adaptcl")
    methods = args.methods.split(",") if args.methods else list(PRUNE_METHODS)
    rows = []
    for method in methods:
        cfg = base.replace(prune_method=method)
        result = run_experiment(cfg)
        emit_metrics(result, args.out_dir, _tag(cfg, f"_{method}"))
        record = summary(result)
        sims = [r.similarity for r in result.rounds if r.similarity == r.similarity]
        record.update(prune_method=method,
                      min_equal_rate_similarity=min(sims) if sims else float("nan"))
        rows.append(record)
        print(json.dumps(record, sort_keys=True))
    _write_table(Path(args.out_dir) / "ablate_prune.csv", rows)
    return 0


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="flat key = value config file")
    common.add_argument("--seed", type=int)
    common.add_argument("--out-dir", default="runs")
    common.add_argument("--set", action="append", default=[], metavar="KEY=VALUE",
                        help="override one config value (repeatable)")
    common.add_argument("-v", "--verbose", action="store_true")

    parser = argparse.ArgumentParser(prog="adaptcl", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    run = sub.add_parser("run", parents=[common], help="run one experiment")
    run.add_argument("--policy", choices=POLICIES)
    run.add_argument("--baseline", default="fedavg-s",
                     help="policy to compare against ('' to skip)")
    run.set_defaults(func=cmd_run)

    sweep = sub.add_parser("sweep", parents=[common],
                           help="grid over sigma, rho_max and gamma_min")
    sweep.add_argument("--sigmas", default="2,5,10,20")
    sweep.add_argument("--rho-max", default="0.5")
    sweep.add_argument("--gamma-min", default="0.1")
    sweep.add_argument("--baseline", default="fedavg-s")
    sweep.set_defaults(func=cmd_sweep, policy=None)

    ablate = sub.add_parser("ablate-prune", parents=[common],
                            help="compare the pruning-order variants")
    ablate.add_argument("--methods", default="", help="comma list (default: all five)")
    ablate.set_defaults(func=cmd_ablate, policy=None)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except (ValueError, OSError) as err:
        print(f"adaptcl: error: {err}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
