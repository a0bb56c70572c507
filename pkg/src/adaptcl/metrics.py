"""Metrics tables and run summaries."""

from __future__ import annotations

import csv
import json
from pathlib import Path

from .runner import RunResult


def header(W: int) -> list[str]:
    cols = ["round", "sim_time_s", "H", "acc"]
    cols += [f"phi_{w}" for w in range(W)]
    cols += [f"gamma_{w}" for w in range(W)]
    cols += [f"rate_{w}" for w in range(W)]
    return cols


def summary(result: RunResult, baseline: RunResult | None = None,
            baseline_name: str | None = None) -> dict:
    acc, time = result.reported
    out = {
        "policy": result.config.policy,
        "seed": result.config.seed,
        "sigma": result.config.sigma,
        "final_acc": round(result.final_accuracy, 6),
        "total_time_s": round(result.total_time, 9),
        "reported_acc": round(acc, 6),
        "reported_time_s": round(time, 9),
        "mean_param_reduction": round(result.mean_param_reduction, 6),
        "overhead_fraction": round(result.overhead_fraction(), 6),
    }
    if baseline is not None:
        b_acc, b_time = baseline.reported
        out["baseline"] = baseline_name or baseline.config.policy
        out["speedup"] = round(b_time / time, 6)
        out["delta_acc"] = round(acc - b_acc, 6)
    return out


def emit_metrics(result: RunResult, out_dir: str | Path, name: str,
                 baseline: RunResult | None = None,
                 baseline_name: str | None = None) -> tuple[Path, Path]:
    """Write ``<name>.csv`` (one row per round) and ``<name>.summary.json`` (one line)."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    table = out_dir / f"{name}.csv"
    W = result.config.workers
    with table.open("w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(header(W))
        for r in result.rounds:
            writer.writerow([r.round, repr(r.sim_time), repr(r.H), repr(r.accuracy)]
                            + [repr(x) for x in r.phi]
                            + [repr(x) for x in r.gamma]
                            + [repr(x) for x in r.rates])
    summary_path = out_dir / f"{name}.summary.json"
    record = summary(result, baseline, baseline_name)
    summary_path.write_text(json.dumps(record, sort_keys=True) + "\n")
    return table, summary_path
