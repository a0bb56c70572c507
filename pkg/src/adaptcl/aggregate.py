"""Server-side aggregation of heterogeneous sub-models into the base model."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .model import MLP, GlobalIndex

RUNNING_VAR_FLOOR = 1e-5


@dataclass(frozen=True)
class AggregationRule:
    tag: str = "by-worker"  # or "by-unit"
    data_weights: tuple[float, ...] | None = None

    def __post_init__(self):
        if self.tag not in ("by-worker", "by-unit"):
            raise ValueError(f"unknown aggregation rule {self.tag!r}")
        if self.data_weights is not None:
            if abs(sum(self.data_weights) - 1.0) > 1e-9 or min(self.data_weights) < 0:
                raise ValueError("data weights must be non-negative and sum to 1")

    def weights(self, n_workers: int) -> np.ndarray:
        if self.data_weights is None:
            return np.full(n_workers, 1.0 / n_workers)
        if len(self.data_weights) != n_workers:
            raise ValueError("one data weight per worker expected")
        return np.asarray(self.data_weights, dtype=float)


def _slots(model: MLP):
    """(key, array, row ids, col ids) for every aggregated tensor."""
    idx = model.index
    L = len(model.weights)
    for k in range(L):
        rows = idx.positions(k)
        cols = idx.positions(k - 1) if k > 0 else np.arange(idx.shape.widths[0])
        yield ("W", k), model.weights[k], rows, cols
        if model.biases[k] is not None:
            yield ("b", k), model.biases[k], rows, None
        if k < L - 1 and model.bn[k] is not None:
            bn = model.bn[k]
            for name in ("scale", "shift", "running_mean", "running_var"):
                yield (name, k), getattr(bn, name), rows, None


def _locate(rows, cols):
    return np.ix_(rows, cols) if cols is not None else (rows,)


def aggregate(submodels: Sequence[MLP], rule: AggregationRule, previous: MLP) -> MLP:
    """Merge sub-models into a new base model.

    ``previous`` is the current global model; it fixes the parent shape and
    supplies values for parameters no worker holds under ``by-unit``.
    """
    if not submodels:
        raise ValueError("need at least one sub-model")
    if not previous.index.is_full:
        raise ValueError("previous global model must be dense")
    shape = previous.shape
    for m in submodels:
        if m.shape != shape:
            raise ValueError("sub-model does not derive from this base shape")
    coeffs = rule.weights(len(submodels))
    out = previous.copy()
    targets = {key: arr for key, arr, _, _ in _slots(out)}
    sums = {key: np.zeros_like(arr) for key, arr in targets.items()}
    mass = {key: np.zeros_like(arr) for key, arr in targets.items()}
    for c, m in zip(coeffs, submodels):
        for key, arr, rows, cols in _slots(m):
            expected = (len(rows),) if cols is None else (len(rows), len(cols))
            if key not in sums or arr.shape != expected:
                raise ValueError(f"tensor {key} inconsistent with its index")
            loc = _locate(rows, cols)
            sums[key][loc] += c * arr
            mass[key][loc] += c
    for key, target in targets.items():
        if rule.tag == "by-worker":
            target[...] = sums[key]
        else:
            held = mass[key] > 0
            target[held] = sums[key][held] / mass[key][held]
    for bn in out.bn:
        if bn is not None:
            np.maximum(bn.running_var, RUNNING_VAR_FLOOR, out=bn.running_var)
    return out


def extract_submodel(global_model: MLP, index: GlobalIndex) -> MLP:
    """Copy of the global parameters at the positions ``index`` retains."""
    if index.shape != global_model.shape:
        raise ValueError("index does not match the global model's shape")
    if not global_model.index.is_full:
        raise ValueError("can only extract from the dense global model")
    out = global_model.copy()
    out.index = index
    L = len(out.weights)
    for k in range(L):
        rows = index.positions(k)
        cols = index.positions(k - 1) if k > 0 else slice(None)
        out.weights[k] = global_model.weights[k][rows][:, cols].copy()
        if out.biases[k] is not None:
            out.biases[k] = global_model.biases[k][rows].copy()
        if k < L - 1 and out.bn[k] is not None:
            src = global_model.bn[k]
            bn = out.bn[k]
            bn.scale, bn.shift = src.scale[rows].copy(), src.shift[rows].copy()
            bn.running_mean = src.running_mean[rows].copy()
            bn.running_var = src.running_var[rows].copy()
    return out
