import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

from adaptcl.model import (BN_EPS, GlobalIndex, ModelShape, bn_scaling_importance,
                           cross_entropy, forward, group_lasso_penalty, group_norms,
                           init_mlp, loss_and_grads, loss_with_group_lasso, sparse_train,
                           steps_for, accuracy, unit_groups)
from conftest import randomize_bn


def _scalar_forward(model, x):
    """Loop-by-loop recomputation of one sample's logits in inference mode."""
    h = list(x)
    L = len(model.weights)
    for k in range(L):
        W, b = model.weights[k], model.biases[k]
        z = []
        for i in range(W.shape[0]):
            acc = 0.0
            for j in range(W.shape[1]):
                acc += W[i, j] * h[j]
            if b is not None:
                acc += b[i]
            z.append(acc)
        if k == L - 1:
            return z
        bn = model.bn[k]
        if bn is not None:
            z = [bn.scale[i] * (z[i] - bn.running_mean[i]) / math.sqrt(bn.running_var[i] + BN_EPS)
                 + bn.shift[i] for i in range(len(z))]
        h = [max(v, 0.0) for v in z]


def test_identity_layer_passes_input_through():
    shape = ModelShape((3, 3), batchnorm=False, bias=False)
    m = init_mlp(shape, np.random.default_rng(0))
    m.weights[0][:] = np.eye(3)
    X = np.array([[1.0, -2.0, 3.5], [0.0, 4.0, -1.0]])
    np.testing.assert_array_equal(forward(m, X), X)


def test_zero_weights_give_zero_logits(small_model):
    for w in small_model.weights:
        w[:] = 0
    for b in small_model.biases:
        if b is not None:
            b[:] = 0
    for bn in small_model.bn:
        bn.shift[:] = 0
    X = np.random.default_rng(0).normal(size=(4, 5))
    assert not forward(small_model, X).any()


def test_forward_matches_scalar_recomputation():
    rng = np.random.default_rng(42)
    m = randomize_bn(init_mlp(ModelShape((4, 5, 3)), rng), rng)
    m.biases[-1][:] = rng.normal(size=3)
    X = rng.normal(size=(6, 4))
    got = forward(m, X)
    want = np.array([_scalar_forward(m, x) for x in X])
    np.testing.assert_allclose(got, want, rtol=1e-12, atol=1e-12)


def test_forward_rejects_wrong_width(small_model):
    with pytest.raises(ValueError):
        forward(small_model, np.zeros((2, 4)))


def test_cross_entropy_uniform_logits():
    loss, grad = cross_entropy(np.zeros((2, 4)), np.array([0, 3]))
    assert loss == pytest.approx(math.log(4))
    np.testing.assert_allclose(grad.sum(axis=1), 0, atol=1e-15)


def test_penalty_single_group_closed_form():
    # one hidden unit owning exactly two weights (3 in, 4 out)
    m = init_mlp(ModelShape((1, 1, 1), batchnorm=False, bias=False), np.random.default_rng(0))
    m.weights[0][:] = 3.0
    m.weights[1][:] = 4.0
    assert group_lasso_penalty(m, 0.1) == pytest.approx(0.1 * math.sqrt(2) * 5)
    assert group_lasso_penalty(m, 0.1) == pytest.approx(0.7071, abs=1e-4)


def test_lambda_zero_is_plain_cross_entropy(small_model, rng):
    logits, y = rng.normal(size=(5, 3)), rng.integers(0, 3, 5)
    assert loss_with_group_lasso(logits, y, small_model, 0.0) == cross_entropy(logits, y)[0]


def test_all_zero_model_has_zero_penalty(small_model):
    for p in small_model.parameters():
        p[:] = 0
    assert group_lasso_penalty(small_model, 3.0) == 0.0


def test_groups_partition_every_hidden_weight(small_model):
    """Each parameter entry touched by the penalty belongs to exactly one group."""
    params = small_model.parameters()
    hits = [np.zeros(p.shape, int) for p in params]
    for g in unit_groups(small_model):
        for i, ix in g.members:
            hits[i][ix] += 1
    assert max(h.max() for h in hits) == 1
    # the group norms computed by slicing agree with the vectorised ones
    flat = np.concatenate(group_norms(small_model))
    sliced = [math.sqrt(sum((params[i][ix] ** 2).sum() for i, ix in g.members))
              for g in unit_groups(small_model)]
    np.testing.assert_allclose(flat, sliced, rtol=1e-12)


def _numeric_grads(model, X, y, lam, eps=1e-6):
    out = []
    for p in model.parameters():
        g = np.zeros_like(p)
        for ix in np.ndindex(p.shape):
            old = p[ix]
            p[ix] = old + eps
            up, _ = loss_and_grads(model, X, y, lam)
            p[ix] = old - eps
            down, _ = loss_and_grads(model, X, y, lam)
            p[ix] = old
            g[ix] = (up - down) / (2 * eps)
        out.append(g)
    return out


def gradient_error(model, X, y, lam) -> float:
    _, analytic = loss_and_grads(model, X, y, lam)
    numeric = _numeric_grads(model, X, y, lam)
    a = np.concatenate([g.ravel() for g in analytic])
    n = np.concatenate([g.ravel() for g in numeric])
    return float(np.linalg.norm(a - n) / max(np.linalg.norm(a) + np.linalg.norm(n), 1e-12))


@pytest.mark.parametrize("batchnorm", [True, False])
def test_gradients_match_finite_differences(batchnorm):
    rng = np.random.default_rng(7)
    m = init_mlp(ModelShape((3, 4, 3, 2), batchnorm=batchnorm), rng)
    if batchnorm:
        randomize_bn(m, rng)
    X, y = rng.normal(size=(6, 3)), rng.integers(0, 2, 6)
    assert gradient_error(m, X, y, lam=0.05) < 1e-6


def test_steps_for():
    assert steps_for(0, 100, 10) == 0
    assert steps_for(2, 100, 10) == 20
    assert steps_for(0.01, 100, 10) == 1
    assert steps_for(1, 5, 32) == 1


def test_zero_epochs_leaves_model_unchanged(small_model, rng):
    before = [p.copy() for p in small_model.parameters()]
    X, y = rng.normal(size=(20, 5)), rng.integers(0, 3, 20)
    assert sparse_train(small_model, X, y, 0, 0.1, 0.1, 8, rng) == 0
    for a, b in zip(before, small_model.parameters()):
        np.testing.assert_array_equal(a, b)


def test_empty_shard_rejected(small_model, rng):
    with pytest.raises(ValueError):
        sparse_train(small_model, np.zeros((0, 5)), np.zeros(0, int), 1, 0, 0.1, 8, rng)


def test_strong_group_lasso_shrinks_every_group(small_model, rng):
    X, y = rng.normal(size=(64, 5)), rng.integers(0, 3, 64)
    before = np.concatenate(group_norms(small_model))
    # 50 steps: 64 samples / batch 16 = 4 steps per pass
    assert sparse_train(small_model, X, y, 12.5, 10.0, 0.01, 16, rng) == 50
    after = np.concatenate(group_norms(small_model))
    assert (after < before).all()


def test_separable_blobs_are_learned():
    rng = np.random.default_rng(3)
    y = np.repeat([0, 1], 100)
    X = rng.normal(size=(200, 2)) * 0.5 + np.where(y[:, None] == 0, -2.0, 2.0)
    m = init_mlp(ModelShape((2, 8, 2)), rng)
    sparse_train(m, X, y, 5, 1e-4, 0.1, 16, rng)
    assert accuracy(m, X, y) > 0.95


def test_training_is_deterministic_under_seed(small_model):
    X = np.random.default_rng(0).normal(size=(40, 5))
    y = np.arange(40) % 3
    a, b = small_model.copy(), small_model.copy()
    sparse_train(a, X, y, 2, 1e-3, 0.05, 8, np.random.default_rng(9))
    sparse_train(b, X, y, 2, 1e-3, 0.05, 8, np.random.default_rng(9))
    for p, q in zip(a.parameters(), b.parameters()):
        np.testing.assert_array_equal(p, q)


def test_bn_importance_is_absolute_scale():
    m = init_mlp(ModelShape((2, 3, 2)), np.random.default_rng(0))
    m.bn[0].scale[:] = [0.5, -2.0, 0.1]
    assert [s for _, _, s in bn_scaling_importance(m)] == [0.5, 2.0, 0.1]


def test_bn_importance_equal_scales():
    m = init_mlp(ModelShape((2, 3, 3, 2)), np.random.default_rng(0))
    assert len({s for _, _, s in bn_scaling_importance(m)}) == 1


def test_bn_importance_needs_batchnorm():
    m = init_mlp(ModelShape((2, 3, 2), batchnorm=False), np.random.default_rng(0))
    with pytest.raises(ValueError):
        bn_scaling_importance(m)


def test_param_count_matches_arrays(small_model):
    assert small_model.shape.param_count() == small_model.param_count()


@given(st.lists(st.integers(1, 6), min_size=3, max_size=5), st.booleans(), st.booleans())
def test_param_count_formula(widths, batchnorm, bias):
    shape = ModelShape(tuple(widths), batchnorm=batchnorm, bias=bias)
    m = init_mlp(shape, np.random.default_rng(0))
    assert shape.param_count() == m.param_count()


def test_index_positions_and_without():
    shape = ModelShape((4, 3, 2, 2))
    idx = GlobalIndex.full(shape).without([(0, 1)])
    assert idx.layers[0] == (0, 2)
    assert idx.widths == (4, 2, 2, 2)
    np.testing.assert_array_equal(idx.positions(2), [0, 1])
    assert not idx.is_full and GlobalIndex.full(shape).is_full
    with pytest.raises(ValueError):
        GlobalIndex(shape, ((0, 0), (0, 1)))
