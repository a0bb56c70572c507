"""Structural pruning of hidden units.

Pruning orders decide which unit goes next; ``compute_mask`` walks an order
until a parameter budget is met and ``reconfigure`` physically shrinks the
network.
"""

from __future__ import annotations

from dataclasses import dataclass
from itertools import combinations
from typing import NamedTuple

import numpy as np

from .model import MLP, GlobalIndex, ModelShape, bn_scaling_importance

__all__ = [
    "GlobalIndex", "PruneOrder", "PruneMask", "METHODS", "CIG_METHODS",
    "build_order", "compute_mask", "reconfigure", "retention_ratio", "similarity",
    "mean_pairwise_similarity",
]

METHODS = ("cig-bnscalor", "index", "no-adjacent", "no-identical", "no-constant")
# orders that are identical across workers and constant over rounds
CIG_METHODS = ("cig-bnscalor", "index", "no-adjacent")


@dataclass(frozen=True)
class PruneOrder:
    method: str
    units: tuple[tuple[int, int], ...]  # least important first


class PruneMask(NamedTuple):
    units: tuple[tuple[int, int], ...]
    clamped: bool


def _index_order(shape: ModelShape) -> list[tuple[int, int]]:
    return GlobalIndex.full(shape).units()


def build_order(method: str, global_model: MLP | None, seed: int = 0,
                worker_id: int = 0, prune_event: int = 0,
                shape: ModelShape | None = None) -> PruneOrder:
    """Pruning order over every prunable (layer, unit) of the base model.

    ``cig-bnscalor`` needs the aggregated global model; the other methods only
    need its shape (pass ``shape`` when no model exists yet). ``no-identical``
    depends on ``worker_id``, ``no-constant`` on ``prune_event``.
    """
    if method not in METHODS:
        raise ValueError(f"unknown pruning method {method!r}")
    if method == "cig-bnscalor":
        if global_model is None:
            raise ValueError("cig-bnscalor needs an aggregated global model")
        if not global_model.index.is_full:
            raise ValueError("cig-bnscalor importance must come from the full global model")
        ranked = sorted(bn_scaling_importance(global_model), key=lambda t: (t[2], t[0], t[1]))
        return PruneOrder(method, tuple((n, u) for n, u, _ in ranked))

    if shape is None:
        if global_model is None:
            raise ValueError(f"{method} needs a model shape")
        shape = global_model.shape
    base = _index_order(shape)
    N = len(base)
    if method == "index":
        return PruneOrder(method, tuple(base))
    if method == "no-adjacent":
        perm = np.random.default_rng([seed, 0xAD]).permutation(N)
        return PruneOrder(method, tuple(base[i] for i in perm))
    if method == "no-identical":
        # distinct cyclic start per worker (for up to N workers)
        starts = np.random.default_rng([seed, 0x1D]).permutation(N)
        offset = int(starts[worker_id % N])
    else:  # no-constant: one shared start, redrawn at every pruning event
        offset = int(np.random.default_rng([seed, 0xC0, prune_event]).integers(N))
    return PruneOrder(method, tuple(base[offset:] + base[:offset]))


def retention_ratio(index: GlobalIndex, shape: ModelShape | None = None) -> float:
    """Retained parameters over base-model parameters."""
    shape = index.shape if shape is None else shape
    if shape != index.shape:
        raise ValueError("index does not belong to this parent shape")
    return shape.param_count(index.widths) / shape.param_count()


def compute_mask(order: PruneOrder, current: GlobalIndex, pruned_rate: float,
                 gamma_min: float) -> PruneMask:
    """Units to remove so retention goes from gamma_now to gamma_now*(1-P).

    The order is walked front to back, so any two budgets produce nested
    removal sets. Each layer keeps at least one unit, and the walk stops
    before retention would fall below ``gamma_min`` (``clamped`` is then set).
    """
    if not 0 <= pruned_rate < 1:
        raise ValueError(f"pruned rate must lie in [0, 1), got {pruned_rate}")
    shape = current.shape
    base = shape.param_count()
    widths = list(current.widths)
    count = shape.param_count(widths)
    gamma_now = count / base
    if gamma_now < gamma_min - 1e-12:
        raise ValueError(f"retention {gamma_now:.4f} already below gamma_min {gamma_min}")
    target = gamma_now * (1 - pruned_rate)
    clamped = False
    if target < gamma_min:
        target, clamped = gamma_min, True
    retained = [set(layer) for layer in current.layers]
    removed = []
    for n, u in order.units:
        if count / base <= target:
            break
        if u not in retained[n] or widths[n + 1] == 1:
            continue
        widths[n + 1] -= 1
        after = shape.param_count(widths)
        g_before, g_after = count / base, after / base
        if g_after < gamma_min - 1e-12:
            clamped = True
            break
        if g_after < target and (target - g_after) > (g_before - target):
            break  # stopping here lands closer to the budget
        count = after
        retained[n].discard(u)
        removed.append((n, u))
    return PruneMask(tuple(removed), clamped)


def reconfigure(model: MLP, units_to_remove) -> MLP:
    """Physically drop the given (layer, base unit id) pairs from ``model``."""
    units_to_remove = list(units_to_remove)
    if not units_to_remove:
        return model.copy()
    index = model.index
    for n, u in units_to_remove:
        if not (0 <= n < len(index.layers)) or not index.contains(n, u):
            raise ValueError(f"unit {(n, u)} is not in the current index")
    try:
        new_index = index.without(units_to_remove)
    except ValueError as err:
        raise ValueError(f"removal would empty a layer: {err}") from None
    keep = []
    for n, layer in enumerate(index.layers):
        kept = set(new_index.layers[n])
        keep.append(np.array([j for j, u in enumerate(layer) if u in kept], dtype=np.intp))
    out = model.copy()
    out.index = new_index
    L = len(out.weights)
    for k in range(L):
        rows = keep[k] if k < L - 1 else slice(None)
        cols = keep[k - 1] if k > 0 else slice(None)
        out.weights[k] = out.weights[k][rows][:, cols].copy()
        if out.biases[k] is not None:
            out.biases[k] = out.biases[k][rows].copy()
        if k < L - 1 and out.bn[k] is not None:
            bn = out.bn[k]
            bn.scale, bn.shift = bn.scale[rows].copy(), bn.shift[rows].copy()
            bn.running_mean = bn.running_mean[rows].copy()
            bn.running_var = bn.running_var[rows].copy()
    return out


def similarity(i1: GlobalIndex, i2: GlobalIndex) -> float:
    """Mean per-layer Jaccard overlap of two workers' retained units."""
    if i1.shape != i2.shape:
        raise ValueError("indexes refer to different parent shapes")
    if not i1.layers:
        return 1.0
    ratios = []
    for a, b in zip(i1.layers, i2.layers):
        a, b = set(a), set(b)
        ratios.append(len(a & b) / len(a | b))
    return float(np.mean(ratios))


def mean_pairwise_similarity(indexes, pairs=None) -> float:
    pairs = list(combinations(range(len(indexes)), 2)) if pairs is None else list(pairs)
    if not pairs:
        return float("nan")
    return float(np.mean([similarity(indexes[a], indexes[b]) for a, b in pairs]))
