"""Experiment configuration and the flat key-value config format."""

from __future__ import annotations

import configparser
import dataclasses
from dataclasses import dataclass
from pathlib import Path

PRUNE_METHODS = ("cig-bnscalor", "index", "no-adjacent", "no-identical", "no-constant")
POLICIES = ("adaptcl", "fedavg", "fedavg-s", "fedasync-s", "ssp-s")

# short names used in the literature
ALIASES = {
    "W": "workers", "T": "rounds", "E": "epochs", "PI": "prune_interval",
    "beta": "beta", "lambda": "lam", "s": "noniid_s",
}

# pruned rate per worker issued at rounds 10..40 for W = 10, fixed ahead of time
TABLE_SCHEDULE = {
    10: (0.5, 0.3, 0.2, 0.3, 0.3, 0.2, 0.3, 0.2, 0.2, 0.0),
    20: (0.3, 0.2, 0.2, 0.2, 0.3, 0.3, 0.2, 0.2, 0.2, 0.0),
    30: (0.2, 0.1, 0.1, 0.1, 0.2, 0.2, 0.1, 0.0, 0.1, 0.0),
    40: (0.1, 0.0, 0.0, 0.0, 0.1, 0.0, 0.1, 0.0, 0.0, 0.0),
}


@dataclass
class ExperimentConfig:
    policy: str = "adaptcl"
    workers: int = 10
    rounds: int = 60
    epochs: float = 2.0
    prune_interval: int = 10
    beta: float = 1.0
    # pruned-rate learning
    alpha: float = 2.0
    rho_min: float = 0.05
    rho_max: float = 0.5
    gamma_min: float = 0.1
    rho_gap: str = "relative"  # or "absolute"
    prune_method: str = "cig-bnscalor"
    aggregation: str = "by-worker"
    # "" learns rates online; "table" or "round:r1,r2,...;round:..." fixes them
    rate_schedule: str = ""
    # environment
    sigma: float = 2.0
    b_max: float = 5.0
    a_w: float = 0.0
    noise: float = 0.0
    # data and model
    num_classes: int = 4
    samples: int = 2000
    test_samples: int = 500
    feature_dim: int = 16
    class_sep: float = 0.6
    noniid_s: float = 0.0
    hidden: tuple[int, ...] = (64, 32)
    # optimisation
    lam: float = 1e-4
    lr: float = 0.05
    batch_size: int = 32
    weight_decay: float = 5e-4
    seed: int = 0
    # asynchronous baselines
    s_ssp: int = 2
    mu0: float = 0.5
    a_mix: float = 0.5

    def __post_init__(self):
        self.validate()

    def validate(self):
        if self.policy not in POLICIES:
            raise ValueError(f"unknown policy {self.policy!r}; choose from {POLICIES}")
        if self.prune_interval < 1 or self.rounds < 1 or self.workers < 1:
            raise ValueError("workers, rounds and prune_interval must be >= 1")
        if not 0 <= self.beta <= 1:
            raise ValueError("beta must lie in [0, 1]")
        if not 0 <= self.noniid_s <= 100:
            raise ValueError("noniid_s must lie in [0, 100]")
        if self.prune_method not in PRUNE_METHODS:
            raise ValueError(f"unknown prune_method {self.prune_method!r}")
        if self.aggregation not in ("by-worker", "by-unit"):
            raise ValueError(f"unknown aggregation {self.aggregation!r}")
        if self.sigma < 1:
            raise ValueError("sigma must be >= 1")
        if self.epochs < 0 or self.lam < 0 or self.lr <= 0 or self.batch_size < 1:
            raise ValueError("invalid optimisation settings")

    def replace(self, **changes) -> ExperimentConfig:
        return dataclasses.replace(self, **changes)

    def schedule(self) -> dict[int, tuple[float, ...]] | None:
        text = self.rate_schedule.strip()
        if not text:
            return None
        if text == "table":
            sched = TABLE_SCHEDULE
        else:
            sched = {}
            for part in text.split(";"):
                rnd, rates = part.split(":")
                sched[int(rnd)] = tuple(float(r) for r in rates.split(","))
        for rnd, rates in sched.items():
            if len(rates) != self.workers:
                raise ValueError(f"schedule at round {rnd} lists {len(rates)} rates "
                                 f"for {self.workers} workers")
        return sched


def _coerce(name: str, raw: str):
    f = {f.name: f for f in dataclasses.fields(ExperimentConfig)}[name]
    default = f.default
    raw = raw.strip()
    if isinstance(default, bool):
        return raw.lower() in ("1", "true", "yes", "on")
    if isinstance(default, int):
        return int(raw)
    if isinstance(default, float):
        return float(raw)
    if isinstance(default, tuple):
        return tuple(int(x) for x in raw.replace(" ", "").split(",") if x)
    return raw


def parse_overrides(pairs: dict[str, str]) -> dict:
    known = {f.name for f in dataclasses.fields(ExperimentConfig)}
    out = {}
    for key, value in pairs.items():
        name = ALIASES.get(key, key)
        if name not in known:
            raise ValueError(f"unknown config key {key!r}")
        out[name] = _coerce(name, value)
    return out


def read_config_text(text: str) -> dict[str, str]:
    parser = configparser.ConfigParser(delimiters=("=",), comment_prefixes=("#",),
                                       inline_comment_prefixes=("#",), interpolation=None)
    parser.optionxform = str  # keep W/T/PI case
    parser.read_string("[config]\n" + text)
    return dict(parser["config"])


def load_config(path: str | Path | None = None, **overrides) -> ExperimentConfig:
    """Read a flat ``key = value`` file; keyword overrides take precedence."""
    values = {}
    if path is not None:
        values.update(parse_overrides(read_config_text(Path(path).read_text())))
    values.update(overrides)
    return ExperimentConfig(**values)


def dump_config(cfg: ExperimentConfig) -> str:
    lines = []
    for f in dataclasses.fields(cfg):
        v = getattr(cfg, f.name)
        if isinstance(v, tuple):
            v = ",".join(str(x) for x in v)
        lines.append(f"{f.name} = {v}")
    return "\n".join(lines) + "\n"
