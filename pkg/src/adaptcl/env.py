"""Heterogeneous worker environment on a simulated clock.

Sizes are in megabytes, bandwidth in MB per simulated second.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

MB = 1e6


@dataclass(frozen=True)
class Jitter:
    """Multiplicative uniform(1 - magnitude, 1 + magnitude) noise."""

    magnitude: float = 0.0
    seed: int = 0
    distribution: str = "uniform"

    def __post_init__(self):
        if not 0 <= self.magnitude <= 0.5:
            raise ValueError("jitter magnitude must lie in [0, 0.5]")
        if self.distribution != "uniform":
            raise ValueError(f"unsupported jitter distribution {self.distribution!r}")

    def draw(self, worker_id: int, round_no: int) -> float:
        if self.magnitude == 0:
            return 1.0
        rng = np.random.default_rng([self.seed, worker_id, round_no, 0x717])
        return float(rng.uniform(1 - self.magnitude, 1 + self.magnitude))


@dataclass(frozen=True)
class WorkerProfile:
    worker_id: int
    bandwidth: float  # MB / s
    compute_coeff: float = 0.0  # seconds per work unit
    noise: Jitter | None = None

    def __post_init__(self):
        if not self.bandwidth > 0:
            raise ValueError("bandwidth must be positive")
        if self.compute_coeff < 0:
            raise ValueError("compute coefficient must be non-negative")

    def transfer_time(self, size_mb: float) -> float:
        return size_mb / self.bandwidth

    def factor(self, round_no: int) -> float:
        return 1.0 if self.noise is None else self.noise.draw(self.worker_id, round_no)


def update_time(profile: WorkerProfile, model_param_mb: float, training_work_units: float,
                round_no: int = 0) -> float:
    """Send + train + receive time for one round with a fixed model size."""
    return round_update_time(profile, model_param_mb, model_param_mb, training_work_units,
                             round_no)


def round_update_time(profile: WorkerProfile, send_mb: float, recv_mb: float,
                      training_work_units: float, round_no: int = 0) -> float:
    """Like ``update_time`` but the upload may be smaller (pruned mid-round)."""
    t = (profile.compute_coeff * training_work_units
         + profile.transfer_time(send_mb) + profile.transfer_time(recv_mb))
    return t * profile.factor(round_no)


def training_work(macs_per_sample: int, samples: int) -> int:
    """Forward + backward work, counted as twice the forward MACs."""
    return 2 * macs_per_sample * samples


def heterogeneity(phis: Sequence[float]) -> float:
    """One minus the mean ratio of the fastest time to each other worker's time."""
    phis = np.asarray(phis, dtype=float)
    if len(phis) < 2:
        raise ValueError("heterogeneity needs at least two workers")
    if not (phis > 0).all():
        raise ValueError("update times must be positive")
    fastest = int(np.argmin(phis))
    others = np.delete(phis, fastest)
    return float(1.0 - np.mean(phis[fastest] / others))


def _slowdown(sigma: float, W: int, w: int) -> float:
    """Factor for 1-based worker ``w``; worker W is the fastest."""
    return 1.0 + (sigma - 1.0) / (W - 1) * (W - w)


def predicted_heterogeneity(sigma: float, W: int) -> float:
    if sigma < 1 or W < 2:
        raise ValueError("need sigma >= 1 and W >= 2")
    return 1.0 - sum(1.0 / _slowdown(sigma, W, w) for w in range(1, W)) / (W - 1)


def make_bandwidths(b_max: float, sigma: float, W: int, model_param_mb: float,
                    t_train: float) -> list[float]:
    """Bandwidths spreading update times uniformly between phi_fast and sigma*phi_fast.

    List position ``i`` is 1-based worker ``i + 1``; the last worker is the
    fastest and gets exactly ``b_max``.
    """
    if b_max <= 0 or sigma < 1 or t_train < 0:
        raise ValueError("need b_max > 0, sigma >= 1, t_train >= 0")
    if W == 1 or sigma == 1:
        return [float(b_max)] * W
    fast = 2 * model_param_mb / b_max + t_train
    out = []
    for w in range(1, W + 1):
        phi = fast * _slowdown(sigma, W, w)
        if phi <= t_train:
            raise ValueError("target update time not above training time")
        out.append(b_max if w == W else 2 * model_param_mb / (phi - t_train))
    return out


@dataclass
class SimClock:
    now: float = 0.0
    log: list[tuple[int, float, float]] = field(default_factory=list)  # (round, start, end)

    def advance(self, round_no: int, duration: float) -> float:
        if duration < 0 or math.isnan(duration):
            raise ValueError("clock cannot run backwards")
        start = self.now
        self.now += duration
        self.log.append((round_no, start, self.now))
        return self.now

    def advance_to(self, round_no: int, t: float) -> float:
        return self.advance(round_no, max(0.0, t - self.now))
