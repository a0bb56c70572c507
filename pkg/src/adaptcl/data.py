"""Synthetic classification data and label-skewed partitioning."""

from __future__ import annotations

from typing import NamedTuple

import numpy as np


class Dataset(NamedTuple):
    X_train: np.ndarray
    y_train: np.ndarray
    X_test: np.ndarray
    y_test: np.ndarray


def make_blobs(num_classes: int, n_train: int, n_test: int, feature_dim: int,
               class_sep: float, seed: int) -> Dataset:
    """Balanced Gaussian blobs with unit covariance around random class means."""
    rng = np.random.default_rng([seed, 0xDA7A])
    means = rng.normal(scale=class_sep, size=(num_classes, feature_dim))

    def draw(n):
        y = np.arange(n) % num_classes
        rng.shuffle(y)
        return means[y] + rng.normal(size=(n, feature_dim)), y

    X_train, y_train = draw(n_train)
    X_test, y_test = draw(n_test)
    return Dataset(X_train, y_train, X_test, y_test)


def partition_noniid(labels: np.ndarray, W: int, s_percent: float,
                     rng: np.random.Generator) -> list[np.ndarray]:
    """Split sample ids into W shards of equal size (+-1).

    ``100 - s`` percent of the samples are dealt out uniformly at random; the
    remaining ``s`` percent are sorted by label and handed out in contiguous
    runs, which skews each shard's class mix.
    """
    if not 0 <= s_percent <= 100:
        raise ValueError(f"non-IID percentage must lie in [0, 100], got {s_percent}")
    labels = np.asarray(labels)
    n = len(labels)
    if W < 1 or n < W:
        raise ValueError("need at least one sample per worker")
    perm = rng.permutation(n)
    n_sorted = int(round(n * s_percent / 100))
    iid, skewed = perm[:n - n_sorted], perm[n - n_sorted:]
    skewed = skewed[np.argsort(labels[skewed], kind="stable")]

    total = [len(a) for a in np.array_split(np.empty(n), W)]
    iid_parts = np.array_split(iid, W)
    shards, start = [], 0
    for w in range(W):
        take = total[w] - len(iid_parts[w])
        shards.append(np.concatenate([iid_parts[w], skewed[start:start + take]]))
        start += take
    return shards
