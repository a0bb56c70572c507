"""Small fully-connected network with batch norm, written directly in numpy.

Hidden units are the prunable structure. A model always carries a
``GlobalIndex`` telling which base-model units it still holds, so the same
class serves as the dense global model and as a worker's pruned sub-model.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import NamedTuple, Sequence

import numpy as np

BN_EPS = 1e-5
BN_MOMENTUM = 0.1
WEIGHT_DECAY = 5e-4


class LayerSpec(NamedTuple):
    kind: str  # dense | batchnorm | activation
    input_units: int
    output_units: int
    prunable: bool


@dataclass(frozen=True)
class ModelShape:
    """Base-model layout: ``widths = (inputs, hidden..., classes)``."""

    widths: tuple[int, ...]
    batchnorm: bool = True
    bias: bool = True

    def __post_init__(self):
        object.__setattr__(self, "widths", tuple(int(w) for w in self.widths))
        if len(self.widths) < 2 or min(self.widths) < 1:
            raise ValueError(f"invalid widths {self.widths}")

    @property
    def n_hidden(self) -> int:
        return len(self.widths) - 2

    @property
    def hidden_bias(self) -> bool:
        # batch-norm shift already plays the role of a hidden bias
        return self.bias and not self.batchnorm

    def layer_specs(self) -> list[LayerSpec]:
        specs = []
        for k in range(self.n_hidden):
            w_in, w_out = self.widths[k], self.widths[k + 1]
            specs.append(LayerSpec("dense", w_in, w_out, True))
            if self.batchnorm:
                specs.append(LayerSpec("batchnorm", w_out, w_out, False))
            specs.append(LayerSpec("activation", w_out, w_out, False))
        specs.append(LayerSpec("dense", self.widths[-2], self.widths[-1], False))
        return specs

    def param_count(self, widths: Sequence[int] | None = None) -> int:
        """Number of trainable parameters for the given (possibly pruned) widths."""
        w = self.widths if widths is None else tuple(widths)
        hidden = sum(w[1:-1])
        n = sum(a * b for a, b in zip(w[:-1], w[1:]))
        if self.bias:
            n += w[-1]
        if self.hidden_bias:
            n += hidden
        if self.batchnorm:
            n += 2 * hidden
        return n

    @property
    def param_bytes(self) -> int:
        return 4 * self.param_count()


@dataclass(frozen=True)
class GlobalIndex:
    """Retained base-model unit ids, one sorted tuple per hidden layer."""

    shape: ModelShape
    layers: tuple[tuple[int, ...], ...]

    def __post_init__(self):
        layers = tuple(tuple(int(u) for u in layer) for layer in self.layers)
        object.__setattr__(self, "layers", layers)
        if len(layers) != self.shape.n_hidden:
            raise ValueError("index must have one entry per hidden layer")
        for n, layer in enumerate(layers):
            width = self.shape.widths[n + 1]
            if not layer:
                raise ValueError(f"layer {n} would be empty")
            if any(b <= a for a, b in zip(layer, layer[1:])):
                raise ValueError(f"layer {n} ids must be sorted and unique")
            if layer[0] < 0 or layer[-1] >= width:
                raise ValueError(f"layer {n} ids out of range [0, {width})")

    @classmethod
    def full(cls, shape: ModelShape) -> GlobalIndex:
        return cls(shape, tuple(tuple(range(w)) for w in shape.widths[1:-1]))

    @property
    def widths(self) -> tuple[int, ...]:
        w = self.shape.widths
        return (w[0], *(len(layer) for layer in self.layers), w[-1])

    @property
    def is_full(self) -> bool:
        return self.widths == self.shape.widths

    def units(self) -> list[tuple[int, int]]:
        return [(n, u) for n, layer in enumerate(self.layers) for u in layer]

    def contains(self, layer: int, unit: int) -> bool:
        return unit in self.layers[layer]

    def positions(self, layer: int) -> np.ndarray:
        """Base-model ids for every row of layer ``layer`` (output layer included)."""
        if layer < self.shape.n_hidden:
            return np.asarray(self.layers[layer], dtype=np.intp)
        return np.arange(self.shape.widths[-1])

    def without(self, units) -> GlobalIndex:
        drop: dict[int, set[int]] = {}
        for n, u in units:
            drop.setdefault(n, set()).add(u)
        return GlobalIndex(
            self.shape,
            tuple(tuple(u for u in layer if u not in drop.get(n, ()))
                  for n, layer in enumerate(self.layers)),
        )

    @property
    def nbytes(self) -> int:
        """Wire size as one bitmask per prunable layer."""
        return sum(math.ceil(w / 8) for w in self.shape.widths[1:-1])


@dataclass
class BatchNorm:
    scale: np.ndarray
    shift: np.ndarray
    running_mean: np.ndarray
    running_var: np.ndarray

    @classmethod
    def fresh(cls, n: int) -> BatchNorm:
        return cls(np.ones(n), np.zeros(n), np.zeros(n), np.ones(n))

    def copy(self) -> BatchNorm:
        return BatchNorm(self.scale.copy(), self.shift.copy(),
                         self.running_mean.copy(), self.running_var.copy())


@dataclass
class MLP:
    """Weights ``weights[k]`` have shape ``(out_k, in_k)``."""

    index: GlobalIndex
    weights: list[np.ndarray]
    biases: list[np.ndarray | None]
    bn: list[BatchNorm | None]

    @property
    def shape(self) -> ModelShape:
        return self.index.shape

    @property
    def widths(self) -> tuple[int, ...]:
        return self.index.widths

    def copy(self) -> MLP:
        return MLP(
            self.index,
            [w.copy() for w in self.weights],
            [None if b is None else b.copy() for b in self.biases],
            [None if b is None else b.copy() for b in self.bn],
        )

    def parameters(self) -> list[np.ndarray]:
        """Trainable arrays in a fixed order; gradients use the same order."""
        out = []
        for k, w in enumerate(self.weights):
            out.append(w)
            if self.biases[k] is not None:
                out.append(self.biases[k])
            if k < len(self.bn) and self.bn[k] is not None:
                out.extend((self.bn[k].scale, self.bn[k].shift))
        return out

    def param_count(self) -> int:
        return sum(p.size for p in self.parameters())

    @property
    def param_bytes(self) -> int:
        return 4 * self.param_count()

    def macs_per_sample(self) -> int:
        w = self.widths
        return sum(a * b for a, b in zip(w[:-1], w[1:]))


def init_mlp(shape: ModelShape, rng: np.random.Generator) -> MLP:
    """Glorot-uniform dense weights, unit BN scale, zero shift and biases."""
    weights, biases, bn = [], [], []
    w = shape.widths
    for k in range(len(w) - 1):
        limit = math.sqrt(6.0 / (w[k] + w[k + 1]))
        weights.append(rng.uniform(-limit, limit, size=(w[k + 1], w[k])))
        is_out = k == len(w) - 2
        has_bias = shape.bias if is_out else shape.hidden_bias
        biases.append(np.zeros(w[k + 1]) if has_bias else None)
        if not is_out:
            bn.append(BatchNorm.fresh(w[k + 1]) if shape.batchnorm else None)
    return MLP(GlobalIndex.full(shape), weights, biases, bn)


# -- forward / backward ----------------------------------------------------


def _check_input(model: MLP, X: np.ndarray):
    if X.ndim != 2 or X.shape[1] != model.widths[0]:
        raise ValueError(
            f"input of shape {X.shape} does not match model input width {model.widths[0]}")
    if X.shape[0] < 1:
        raise ValueError("empty batch")


def _forward(model: MLP, X: np.ndarray, training: bool, update_stats: bool):
    _check_input(model, X)
    cache = []
    h = X
    n_layers = len(model.weights)
    for k in range(n_layers):
        z = h @ model.weights[k].T
        if model.biases[k] is not None:
            z = z + model.biases[k]
        if k == n_layers - 1:
            cache.append({"h_in": h})
            return z, cache
        entry = {"h_in": h}
        bn = model.bn[k]
        if bn is not None:
            if training:
                mean = z.mean(axis=0)
                var = z.var(axis=0)
                if update_stats:
                    bn.running_mean *= 1 - BN_MOMENTUM
                    bn.running_mean += BN_MOMENTUM * mean
                    bn.running_var *= 1 - BN_MOMENTUM
                    bn.running_var += BN_MOMENTUM * var
            else:
                mean, var = bn.running_mean, bn.running_var
            inv_std = 1.0 / np.sqrt(var + BN_EPS)
            xhat = (z - mean) * inv_std
            entry.update(xhat=xhat, inv_std=inv_std)
            z = bn.scale * xhat + bn.shift
        entry["pre_act"] = z
        cache.append(entry)
        h = np.maximum(z, 0.0)
    raise AssertionError("unreachable")


def forward(model: MLP, X: np.ndarray, training: bool = False) -> np.ndarray:
    """Logits for ``X``. Training mode uses batch statistics and updates the running ones."""
    logits, _ = _forward(model, X, training, update_stats=training)
    return logits


def _backward(model: MLP, cache, dlogits: np.ndarray) -> list[np.ndarray]:
    n_layers = len(model.weights)
    dW = [None] * n_layers
    db = [None] * n_layers
    dscale = [None] * (n_layers - 1)
    dshift = [None] * (n_layers - 1)
    dz = dlogits
    for k in range(n_layers - 1, -1, -1):
        h_in = cache[k]["h_in"]
        dW[k] = dz.T @ h_in
        if model.biases[k] is not None:
            db[k] = dz.sum(axis=0)
        if k == 0:
            break
        dh = dz @ model.weights[k]
        prev = cache[k - 1]
        dz = dh * (prev["pre_act"] > 0)
        bn = model.bn[k - 1]
        if bn is not None:
            xhat, inv_std = prev["xhat"], prev["inv_std"]
            dscale[k - 1] = (dz * xhat).sum(axis=0)
            dshift[k - 1] = dz.sum(axis=0)
            dxhat = dz * bn.scale
            m = dz.shape[0]
            dz = inv_std / m * (m * dxhat - dxhat.sum(axis=0)
                                - xhat * (dxhat * xhat).sum(axis=0))
    grads = []
    for k in range(n_layers):
        grads.append(dW[k])
        if db[k] is not None:
            grads.append(db[k])
        if k < n_layers - 1 and model.bn[k] is not None:
            grads.extend((dscale[k], dshift[k]))
    return grads


def cross_entropy(logits: np.ndarray, labels: np.ndarray) -> tuple[float, np.ndarray]:
    """Mean cross-entropy and its gradient w.r.t. the logits."""
    shifted = logits - logits.max(axis=1, keepdims=True)
    logp = shifted - np.log(np.exp(shifted).sum(axis=1, keepdims=True))
    m = logits.shape[0]
    loss = -logp[np.arange(m), labels].mean()
    grad = np.exp(logp)
    grad[np.arange(m), labels] -= 1.0
    return float(loss), grad / m


# -- group lasso -----------------------------------------------------------


class UnitGroup(NamedTuple):
    layer_id: int  # hidden layer
    unit_id: int  # base-model id
    members: list[tuple[int, tuple]]  # (position in parameters(), numpy index)


def unit_groups(model: MLP) -> list[UnitGroup]:
    """Parameter groups, one per hidden unit.

    A unit owns its bias/BN entries and its outgoing column. Only first-layer
    units also own their incoming row: deeper incoming rows are the outgoing
    columns of the previous layer, so each weight lands in exactly one group.
    """
    pos = {}
    i = 0
    for k in range(len(model.weights)):
        pos[("W", k)] = i
        i += 1
        if model.biases[k] is not None:
            pos[("b", k)] = i
            i += 1
        if k < len(model.bn) and model.bn[k] is not None:
            pos[("scale", k)] = i
            pos[("shift", k)] = i + 1
            i += 2
    groups = []
    for n, layer in enumerate(model.index.layers):
        for j, u in enumerate(layer):
            members = []
            if n == 0:
                members.append((pos[("W", 0)], (j, slice(None))))
            if ("b", n) in pos:
                members.append((pos[("b", n)], (j,)))
            if ("scale", n) in pos:
                members.append((pos[("scale", n)], (j,)))
                members.append((pos[("shift", n)], (j,)))
            members.append((pos[("W", n + 1)], (slice(None), j)))
            groups.append(UnitGroup(n, u, members))
    return groups


def _group_sq_norms(model: MLP) -> list[tuple[np.ndarray, int]]:
    """Per hidden layer: squared group norms and the (shared) group size."""
    out = []
    for n in range(model.shape.n_hidden):
        sq = (model.weights[n + 1] ** 2).sum(axis=0)
        size = model.weights[n + 1].shape[0]
        if n == 0:
            sq = sq + (model.weights[0] ** 2).sum(axis=1)
            size += model.weights[0].shape[1]
        if model.biases[n] is not None:
            sq = sq + model.biases[n] ** 2
            size += 1
        if model.bn[n] is not None:
            sq = sq + model.bn[n].scale ** 2 + model.bn[n].shift ** 2
            size += 2
        out.append((sq, size))
    return out


def group_norms(model: MLP) -> list[np.ndarray]:
    return [np.sqrt(sq) for sq, _ in _group_sq_norms(model)]


def group_lasso_penalty(model: MLP, lam: float) -> float:
    if lam < 0:
        raise ValueError("lambda must be non-negative")
    if lam == 0:
        return 0.0
    return lam * sum(math.sqrt(size) * np.sqrt(sq).sum()
                     for sq, size in _group_sq_norms(model))


def _add_group_lasso_grad(model: MLP, grads: list[np.ndarray], lam: float):
    if lam == 0:
        return
    params = model.parameters()
    slot = {id(p): i for i, p in enumerate(params)}
    for n, (sq, size) in enumerate(_group_sq_norms(model)):
        norm = np.sqrt(sq)
        # subgradient 0 for dead groups
        coef = np.where(norm > 0, lam * math.sqrt(size) / np.where(norm > 0, norm, 1.0), 0.0)
        grads[slot[id(model.weights[n + 1])]] += model.weights[n + 1] * coef
        if n == 0:
            grads[slot[id(model.weights[0])]] += model.weights[0] * coef[:, None]
        if model.biases[n] is not None:
            grads[slot[id(model.biases[n])]] += model.biases[n] * coef
        if model.bn[n] is not None:
            grads[slot[id(model.bn[n].scale)]] += model.bn[n].scale * coef
            grads[slot[id(model.bn[n].shift)]] += model.bn[n].shift * coef


def loss_with_group_lasso(logits: np.ndarray, labels: np.ndarray, model: MLP,
                          lam: float) -> float:
    """Mean cross-entropy plus ``lam * sum_g sqrt(|g|) * ||theta_g||``."""
    if logits.shape[0] != len(labels):
        raise ValueError("logits and labels disagree on batch size")
    ce, _ = cross_entropy(logits, np.asarray(labels))
    return ce + group_lasso_penalty(model, lam)


def loss_and_grads(model: MLP, X: np.ndarray, y: np.ndarray, lam: float,
                   training: bool = True, update_stats: bool = False):
    """Loss and gradients aligned with ``model.parameters()``."""
    logits, cache = _forward(model, X, training, update_stats)
    ce, dlogits = cross_entropy(logits, y)
    grads = _backward(model, cache, dlogits)
    _add_group_lasso_grad(model, grads, lam)
    return ce + group_lasso_penalty(model, lam), grads


# -- training --------------------------------------------------------------


def steps_for(epochs: float, n_samples: int, batch_size: int) -> int:
    """Whole mini-batches in ``epochs`` passes; at least one when epochs > 0."""
    if epochs <= 0:
        return 0
    per_pass = max(1, n_samples // batch_size)
    return max(1, math.floor(epochs * per_pass + 1e-9))


def sparse_train(model: MLP, X: np.ndarray, y: np.ndarray, epochs: float, lam: float,
                 lr: float, batch_size: int, rng: np.random.Generator,
                 weight_decay: float = WEIGHT_DECAY) -> int:
    """Plain SGD on the group-lasso objective, in place. Returns the step count."""
    if len(X) == 0:
        raise ValueError("empty data shard")
    if lr <= 0:
        raise ValueError("learning rate must be positive")
    n = len(X)
    steps = steps_for(epochs, n, batch_size)
    bs = min(batch_size, n)
    per_pass = max(1, n // batch_size)
    perm = None
    params = model.parameters()
    dense = {id(w) for w in model.weights}
    for step in range(steps):
        j = step % per_pass
        if j == 0:
            perm = rng.permutation(n)
        idx = perm[j * bs:(j + 1) * bs]
        _, grads = loss_and_grads(model, X[idx], y[idx], lam, training=True,
                                  update_stats=True)
        for p, g in zip(params, grads):
            if weight_decay and id(p) in dense:
                g = g + weight_decay * p
            p -= lr * g
    return steps


def accuracy(model: MLP, X: np.ndarray, y: np.ndarray) -> float:
    return float((forward(model, X).argmax(axis=1) == y).mean())


def bn_scaling_importance(model: MLP) -> list[tuple[int, int, float]]:
    """``(layer_id, unit_id, |bn scale|)`` for every prunable unit."""
    out = []
    for n, layer in enumerate(model.index.layers):
        bn = model.bn[n]
        if bn is None:
            raise ValueError(f"hidden layer {n} has no batch norm; BN importance undefined")
        out.extend((n, u, float(abs(s))) for u, s in zip(layer, bn.scale))
    return out
