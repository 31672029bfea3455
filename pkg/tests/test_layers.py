import math

import numpy as np
import pytest

from adindrnn import layers as L
from adindrnn.gradcheck import TOLERANCE, check_layers
from adindrnn.tensor import DimensionError


def zero_attention(n_ch):
    return L.AttentionParams(kernel=np.zeros((n_ch, n_ch)), bias=np.zeros(n_ch))


def identity_indrnn(n, recurrent=0.0):
    return L.IndRNNParams(
        input_weights=np.eye(n),
        recurrent_weights=np.full(n, recurrent),
        hidden_bias=np.zeros(n),
        output_weights=np.eye(n),
        output_bias=np.zeros(n),
    )


# attention


def test_attention_zero_params_is_uniform():
    x = np.random.default_rng(0).normal(size=(5, 7, 4))
    y, w, _ = L.attention_forward(x, zero_attention(4))
    np.testing.assert_array_equal(w, np.full((5, 4), 0.25))
    np.testing.assert_array_equal(y, x / 4)


def test_attention_identity_kernel_example():
    x = np.tile(np.array([0.0, math.log(3)]), (1, 6, 1))
    p = L.AttentionParams(kernel=np.eye(2), bias=np.zeros(2))
    y, w, _ = L.attention_forward(x, p)
    np.testing.assert_allclose(w, [[0.25, 0.75]], rtol=1e-14)
    np.testing.assert_allclose(y[..., 1], 0.75 * x[..., 1], rtol=1e-14)
    np.testing.assert_allclose(y[..., 0], 0.0)


def test_attention_weights_are_distributions():
    rng = np.random.default_rng(1)
    for _ in range(20):
        n_ch = rng.integers(1, 8)
        p = L.AttentionParams(kernel=rng.normal(size=(n_ch, n_ch)), bias=rng.normal(size=n_ch))
        _, w, _ = L.attention_forward(rng.normal(size=(3, 9, n_ch)) * 5, p)
        assert np.all(w >= 0)
        np.testing.assert_allclose(w.sum(axis=1), 1.0, atol=1e-12)


def test_attention_rejects_channel_mismatch():
    with pytest.raises(DimensionError):
        L.attention_forward(np.ones((1, 3, 5)), zero_attention(4))
    with pytest.raises(ValueError):
        L.AttentionParams(kernel=np.zeros((2, 3)), bias=np.zeros(2))


# IndRNN


def test_indrnn_without_recurrence_is_identity_on_nonnegative_input():
    x = np.abs(np.random.default_rng(2).normal(size=(3, 5, 4)))
    y, _ = L.indrnn_forward(x, identity_indrnn(4), "relu", "identity")
    np.testing.assert_array_equal(y, x)


def test_indrnn_hand_recursion():
    p = L.IndRNNParams(
        input_weights=np.array([[1.0]]),
        recurrent_weights=np.array([0.5]),
        hidden_bias=np.zeros(1),
        output_weights=np.eye(1),
        output_bias=np.zeros(1),
    )
    y, cache = L.indrnn_forward(np.ones((1, 3, 1)), p, "relu", "identity")
    np.testing.assert_allclose(cache.hidden[0, :, 0], [1.0, 1.5, 1.75])
    np.testing.assert_allclose(y[0, :, 0], [1.0, 1.5, 1.75])


def test_indrnn_identity_projection_returns_hidden():
    rng = np.random.default_rng(3)
    p = identity_indrnn(3, 0.7)
    p.input_weights = rng.normal(size=(2, 3))
    y, cache = L.indrnn_forward(rng.normal(size=(2, 6, 2)), p, "relu", "identity")
    np.testing.assert_array_equal(y, cache.hidden)


def test_indrnn_matches_loop_oracle():
    rng = np.random.default_rng(4)
    n_fe, n_hid = 3, 5
    p = L.IndRNNParams(
        input_weights=rng.normal(size=(n_fe, n_hid)),
        recurrent_weights=rng.uniform(0, 1, n_hid),
        hidden_bias=rng.normal(size=n_hid),
        output_weights=rng.normal(size=(n_hid, n_hid)),
        output_bias=rng.normal(size=n_hid),
    )
    x = rng.normal(size=(2, 7, n_fe))
    y, _ = L.indrnn_forward(x, p)
    for s in range(2):
        h = np.zeros(n_hid)
        for t in range(7):
            for j in range(n_hid):
                h[j] = max(0.0, sum(x[s, t, i] * p.input_weights[i, j] for i in range(n_fe)) + h[j] * p.recurrent_weights[j] + p.hidden_bias[j])
            out = np.maximum(h @ p.output_weights + p.output_bias, 0)
            np.testing.assert_allclose(y[s, t], out, rtol=1e-12, atol=1e-12)


# batch normalisation


def test_batchnorm_constant_feature_gives_beta():
    p = L.BatchNormParams.create(2)
    p.beta[:] = [0.3, -1.0]
    x = np.random.default_rng(5).normal(size=(4, 3, 2))
    x[..., 0] = 7.0
    y, _ = L.batchnorm_apply(x, p, "train")
    np.testing.assert_allclose(y[..., 0], 0.3, atol=1e-12)


def test_batchnorm_two_values_map_to_plus_minus_one():
    p = L.BatchNormParams.create(1, epsilon=1e-14)
    x = np.array([0.0, 2.0, 0.0, 2.0]).reshape(2, 2, 1)
    y, _ = L.batchnorm_apply(x, p, "train")
    np.testing.assert_allclose(y.ravel(), [-1, 1, -1, 1], atol=1e-12)


def test_batchnorm_zero_gamma_gives_beta():
    p = L.BatchNormParams.create(3)
    p.gamma[:] = 0
    p.beta[:] = [1.0, 2.0, 3.0]
    x = np.random.default_rng(6).normal(size=(2, 4, 3))
    for mode in ("train", "infer"):
        y, _ = L.batchnorm_apply(x, p, mode)
        np.testing.assert_array_equal(y, np.broadcast_to(p.beta, x.shape))


def test_batchnorm_running_stats_update_only_when_committed():
    p = L.BatchNormParams.create(1)
    x = np.array([1.0, 3.0]).reshape(1, 2, 1)
    _, cache = L.batchnorm_apply(x, p, "train")
    np.testing.assert_array_equal(p.running_mean, [0.0])
    L.update_running_stats(p, cache)
    np.testing.assert_allclose(p.running_mean, [0.9 * 0 + 0.1 * 2.0])
    np.testing.assert_allclose(p.running_var, [0.9 * 1 + 0.1 * 1.0])
    y, _ = L.batchnorm_apply(x, p, "infer")
    np.testing.assert_allclose(y.ravel(), (x.ravel() - 0.2) / np.sqrt(1.0 + 1e-5))


def test_batchnorm_rejects_unknown_mode():
    with pytest.raises(ValueError):
        L.batchnorm_apply(np.ones((1, 2, 1)), L.BatchNormParams.create(1), "eval")


# pooling


def test_maxpool_examples():
    y, _ = L.maxpool_time(np.array([1.0, 3.0, 2.0, 5.0]).reshape(1, 4, 1))
    np.testing.assert_array_equal(y.ravel(), [3, 5])
    y, _ = L.maxpool_time(np.full((2, 6, 3), 4.0))
    np.testing.assert_array_equal(y, np.full((2, 3, 3), 4.0))
    y, _ = L.maxpool_time(np.arange(5.0).reshape(1, 5, 1))
    np.testing.assert_array_equal(y.ravel(), [1, 3])


def test_maxpool_rejects_too_short_sequence():
    with pytest.raises(DimensionError):
        L.maxpool_time(np.ones((1, 1, 2)))


def test_avgpool_examples():
    y, _ = L.avgpool_time(np.full((2, 5, 3), -1.5))
    np.testing.assert_array_equal(y, np.full((2, 3), -1.5))
    y, _ = L.avgpool_time(np.array([1.0, 3.0]).reshape(1, 2, 1))
    np.testing.assert_array_equal(y, [[2.0]])
    x = np.arange(4.0).reshape(2, 1, 2)
    np.testing.assert_array_equal(L.avgpool_time(x)[0], x[:, 0])


# fully connected


def test_fc_examples():
    x = np.random.default_rng(7).normal(size=(3, 4))
    y, _ = L.fc_forward(x, L.FcParams(np.eye(4), np.zeros(4)))
    np.testing.assert_array_equal(y, x)
    y, _ = L.fc_forward(np.array([[1.0, 2.0]]), L.FcParams(np.eye(2), np.ones(2)))
    np.testing.assert_array_equal(y, [[2.0, 3.0]])
    c = np.array([-0.5, 0.25])
    y, _ = L.fc_forward(np.zeros((2, 3)), L.FcParams(np.ones((3, 2)), c), "relu")
    np.testing.assert_array_equal(y, [[0.0, 0.25], [0.0, 0.25]])


def test_scalar_linear_squared_error_gradient():
    w, b, x, t = 1.7, -0.3, np.array([[2.5]]), 1.0
    p = L.FcParams(np.array([[w]]), np.array([b]))
    y, cache = L.fc_forward(x, p)
    dx, g = L.layer_backward(cache, 2 * (y - t))
    assert g["weights"][0, 0] == pytest.approx(2 * (w * 2.5 + b - t) * 2.5)
    assert g["bias"][0] == pytest.approx(2 * (w * 2.5 + b - t))
    assert dx[0, 0] == pytest.approx(2 * (w * 2.5 + b - t) * w)


# backward passes


def test_zero_upstream_gives_zero_gradients():
    rng = np.random.default_rng(8)
    x = rng.normal(size=(2, 4, 3))
    att = L.AttentionParams(rng.normal(size=(3, 3)), rng.normal(size=3))
    rnn = L.IndRNNParams(rng.normal(size=(3, 3)), rng.uniform(size=3), rng.normal(size=3), rng.normal(size=(3, 3)), rng.normal(size=3))
    caches = [
        L.attention_forward(x, att)[2],
        L.indrnn_forward(x, rnn)[1],
        L.batchnorm_apply(x, L.BatchNormParams.create(3), "train")[1],
        L.maxpool_time(x)[1],
        L.avgpool_time(x)[1],
        L.fc_forward(x[:, 0], L.FcParams(rng.normal(size=(3, 2)), rng.normal(size=2)))[1],
    ]
    shapes = [x.shape, x.shape, x.shape, (2, 2, 3), (2, 3), (2, 2)]
    for cache, shape in zip(caches, shapes):
        dx, grads = L.layer_backward(cache, np.zeros(shape))
        assert not np.any(dx)
        assert all(not np.any(g) for g in grads.values())


def test_layer_backward_rejects_unknown_cache():
    with pytest.raises(TypeError):
        L.layer_backward(object(), np.zeros(1))


@pytest.mark.parametrize("seed", range(5))
def test_layer_gradients_match_finite_differences(seed):
    results = check_layers(seed)
    worst = max(results, key=lambda r: r.error)
    assert worst.error < TOLERANCE, worst
