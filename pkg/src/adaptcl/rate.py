"""Pruned-rate controller driven by observed update times.

Each worker keeps a short history of (retention ratio, mean update time)
observations. At a pruning event the retention expected to hit the fastest
worker's time is read off a Newton interpolant of retention as a function of
update time.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import NamedTuple, Sequence

import numpy as np

HISTORY_CAP = 5


def divided_differences(xs: Sequence[float], ys: Sequence[float]) -> list[float]:
    """Newton coefficients f[x0], f[x0,x1], ..., f[x0..xn]."""
    xs = [float(x) for x in xs]
    coef = [float(y) for y in ys]
    n = len(xs)
    if n == 0 or len(coef) != n:
        raise ValueError("need matching, non-empty node lists")
    if len(set(xs)) != n:
        raise ValueError("interpolation nodes must be pairwise distinct")
    for j in range(1, n):
        for i in range(n - 1, j - 1, -1):
            coef[i] = (coef[i] - coef[i - 1]) / (xs[i] - xs[i - j])
    return coef


def newton_eval(xs: Sequence[float], coef: Sequence[float], x: float) -> float:
    """Evaluate the Newton form by nested multiplication."""
    y = coef[-1]
    for i in range(len(coef) - 2, -1, -1):
        y = coef[i] + (x - xs[i]) * y
    return y


def newton_inverse_interpolate(points: Sequence[tuple[float, float]], phi_target: float) -> float:
    """Retention at ``phi_target`` from ``(phi_i, gamma_i)`` observations."""
    phis = [p for p, _ in points]
    gammas = [g for _, g in points]
    return newton_eval(phis, divided_differences(phis, gammas), phi_target)


@dataclass(frozen=True)
class RatePolicy:
    alpha: float = 2.0
    rho_min: float = 0.05
    rho_max: float = 0.5
    gamma_min: float = 0.1
    # "relative": hold when the implied pruned rate is below rho_min;
    # "absolute": hold when the raw retention gap is below rho_min
    gap: str = "relative"

    def __post_init__(self):
        if self.gap not in ("relative", "absolute"):
            raise ValueError(f"unknown gap rule {self.gap!r}")
        if self.alpha <= 0:
            raise ValueError("alpha must be positive")
        if not 0 < self.rho_min < self.rho_max < 1:
            raise ValueError("need 0 < rho_min < rho_max < 1")
        if not 0 < self.gamma_min < 1:
            raise ValueError("gamma_min must lie in (0, 1)")


@dataclass
class RateHistory:
    """Observations for one worker, oldest first."""

    observations: list[tuple[float, float]] = field(default_factory=list)  # (gamma, phi)
    pending_times: list[float] = field(default_factory=list)

    def record(self, phi: float):
        if not phi > 0:
            raise ValueError(f"update time must be positive, got {phi}")
        self.pending_times.append(float(phi))

    def flush(self, gamma_now: float) -> float:
        """Close the interval: store (gamma_now, mean pending time) and return the mean."""
        if not self.pending_times:
            raise ValueError("no update times recorded since the last pruning event")
        phi = float(np.mean(self.pending_times))
        self.pending_times.clear()
        obs = self.observations
        # same model measured again: keep only the newer interval
        if obs and obs[-1][0] == gamma_now:
            obs.pop()
        # equal times would break divided differences; newest wins
        obs[:] = [o for o in obs if o[1] != phi]
        if obs and gamma_now > obs[-1][0]:
            raise ValueError("retention must shrink between observations")
        obs.append((float(gamma_now), phi))
        del obs[:-HISTORY_CAP]
        return phi

    @property
    def phi_now(self) -> float:
        return self.observations[-1][1]

    @property
    def gamma_now(self) -> float:
        return self.observations[-1][0]


class RateDecision(NamedTuple):
    rate: float
    branch: str  # "interpolate", "alpha" or "hold"
    gamma_target: float | None  # raw interpolated target, before clamping


def decide_rate(history: RateHistory, phi_min: float, policy: RatePolicy,
                pruned_before: bool) -> RateDecision:
    """Pruned rate for one worker given the current fastest time."""
    gamma_now, phi_now = history.gamma_now, history.phi_now
    if pruned_before and len(history.observations) >= 2:
        points = [(phi, gamma) for gamma, phi in history.observations]
        raw = newton_inverse_interpolate(points, phi_min)
        target = max(raw, policy.gamma_min)
        gap = gamma_now - target
        if policy.gap == "relative":
            gap /= gamma_now
        if gap < policy.rho_min:
            target = gamma_now
        target = min(target, gamma_now)
        rate = (gamma_now - target) / gamma_now
        branch = "interpolate" if rate > 0 else "hold"
    else:
        raw = None
        rate = (phi_now - phi_min) / (policy.alpha * phi_now)
        branch = "alpha" if rate > 0 else "hold"
    rate = min(max(rate, 0.0), policy.rho_max)
    # never ask for a model below gamma_min
    rate = min(rate, max(0.0, 1.0 - policy.gamma_min / gamma_now))
    return RateDecision(rate, branch if rate > 0 else "hold", raw)


def decide_rates(histories: Sequence[RateHistory], policy: RatePolicy,
                 pruned_before: Sequence[bool]) -> list[RateDecision]:
    phi_min = min(h.phi_now for h in histories)
    return [decide_rate(h, phi_min, policy, p) for h, p in zip(histories, pruned_before)]


def compute_pruned_rates(histories: Sequence[RateHistory], policy: RatePolicy,
                         pruned_before: Sequence[bool]) -> list[float]:
    return [d.rate for d in decide_rates(histories, policy, pruned_before)]
