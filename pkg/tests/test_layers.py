from __future__ import annotations

import math

import numpy as np
import pytest

from logrepair.errors import ShapeError, StatisticsError
from logrepair.neural import (
    BatchNorm,
    Dense,
    Embedding,
    LstmLayerParams,
    LstmStack,
    batch_cross_entropy,
    cross_entropy,
    dense_softmax,
    dropout_backward,
    dropout_forward,
    lstm_cell_forward,
    lstm_stack_forward,
    softmax,
)


def rng(seed=0):
    return np.random.Generator(np.random.Philox(seed))


def test_cell_zero_parameters_zero_state():
    params = LstmLayerParams(2, 3, rng=None, dtype=np.float64)
    h, c, _ = lstm_cell_forward(
        params, np.ones(2), np.zeros(3), np.zeros(3)
    )
    assert np.array_equal(h, np.zeros(3))
    assert np.array_equal(c, np.zeros(3))


def test_cell_matches_straight_line_evaluation():
    params = LstmLayerParams(1, 1, rng=None, dtype=np.float64)
    values = {
        "w_f": 1.0, "u_f": 0.5, "b_f": 0.1,
        "w_i": 0.8, "u_i": -0.3, "b_i": -0.2,
        "w_g": -1.1, "u_g": 0.7, "b_g": 0.05,
        "w_o": 0.9, "u_o": 0.2, "b_o": 0.3,
    }
    for name, value in values.items():
        getattr(params, name)[...] = value
    x, h_prev, c_prev = 0.4, 0.25, -0.6

    def sig(z):
        return 1.0 / (1.0 + math.exp(-z))

    f = sig(values["u_f"] * h_prev + values["w_f"] * x + values["b_f"])
    i = sig(values["u_i"] * h_prev + values["w_i"] * x + values["b_i"])
    g = math.tanh(values["u_g"] * h_prev + values["w_g"] * x + values["b_g"])
    c = f * c_prev + i * g
    o = sig(values["u_o"] * h_prev + values["w_o"] * x + values["b_o"])
    expected_h = o * math.tanh(c)

    h, c_out, _ = lstm_cell_forward(
        params, np.array([x]), np.array([h_prev]), np.array([c_prev])
    )
    assert abs(float(c_out[0]) - c) < 1e-12
    assert abs(float(h[0]) - expected_h) < 1e-12


def test_cell_gate_ranges():
    params = LstmLayerParams(4, 6, rng=rng(1), dtype=np.float64)
    x = rng(2).normal(size=(5, 4)) * 3
    h, c, cache = lstm_cell_forward(
        params, x, np.zeros((5, 6)), np.zeros((5, 6))
    )
    _, _, _, f, i, g, o, tanh_c = cache
    for gate in (f, i, o):
        assert np.all((gate > 0) & (gate < 1))
    assert np.all((g > -1) & (g < 1))
    assert np.all(np.abs(h) <= 1.0)  # |o * tanh(c)| < 1


def test_cell_shape_errors():
    params = LstmLayerParams(2, 3, rng=rng(0))
    with pytest.raises(ShapeError):
        lstm_cell_forward(params, np.zeros(5), np.zeros(3), np.zeros(3))
    with pytest.raises(ShapeError):
        lstm_cell_forward(params, np.zeros(2), np.zeros(4), np.zeros(4))


def test_stack_single_layer_single_step_equals_cell():
    params = LstmLayerParams(3, 4, rng=rng(3), dtype=np.float64)
    x = rng(4).normal(size=3)
    h, _, _ = lstm_cell_forward(params, x, np.zeros(4), np.zeros(4))
    assert np.allclose(lstm_stack_forward([params], [x]), h, atol=1e-15)


def test_stack_all_pad_equals_zero_input():
    table = rng(5).normal(size=(7, 3))
    table[0] = 0.0  # padding row
    layers = [
        LstmLayerParams(3, 5, rng=rng(6), dtype=np.float64),
        LstmLayerParams(5, 2, rng=rng(7), dtype=np.float64),
    ]
    padded = [table[0] for _ in range(4)]
    zeros = [np.zeros(3) for _ in range(4)]
    assert np.array_equal(
        lstm_stack_forward(layers, padded), lstm_stack_forward(layers, zeros)
    )


def test_stack_is_order_sensitive():
    layers = [LstmLayerParams(3, 4, rng=rng(8), dtype=np.float64)]
    steps = list(rng(9).normal(size=(3, 3)))
    swapped = [steps[1], steps[0], steps[2]]
    assert not np.allclose(
        lstm_stack_forward(layers, steps), lstm_stack_forward(layers, swapped)
    )


def test_stack_class_forward_matches_functional():
    stack = LstmStack(3, (5, 2), rng=rng(10), dtype=np.float64)
    xs = rng(11).normal(size=(2, 4, 3))
    final, _ = stack.forward(xs)
    functional = lstm_stack_forward(
        [layer.params for layer in stack.layers], [xs[:, t, :] for t in range(4)]
    )
    assert np.allclose(final, functional, atol=1e-15)


def test_embedding_lookup_and_scatter():
    emb = Embedding(6, 3, rng=rng(12), dtype=np.float64)
    ids = np.array([[1, 1], [4, 0]])
    out = emb.forward(ids)
    assert out.shape == (2, 2, 3)
    assert np.array_equal(out[0, 0], emb.table[1])
    dout = np.ones((2, 2, 3))
    dtable = emb.backward(ids, dout)
    assert np.array_equal(dtable[1], np.full(3, 2.0))  # id 1 used twice
    assert np.array_equal(dtable[2], np.zeros(3))


def test_dropout_inactive_paths():
    x = rng(13).normal(size=(4, 5))
    out, mask = dropout_forward(x, 0.0, training=True, rng=rng(0))
    assert out is x and mask is None
    out, mask = dropout_forward(x, 0.4, training=False)
    assert out is x and mask is None
    assert dropout_backward(x, None) is x


def test_dropout_preserves_expected_value():
    x = np.ones((200, 50))
    total = 0.0
    for seed in range(20):
        out, _ = dropout_forward(x, 0.3, training=True, rng=rng(seed))
        total += out.mean()
    assert abs(total / 20 - 1.0) < 0.01


def test_dropout_mask_scales_kept_units():
    x = np.ones((10, 10))
    out, mask = dropout_forward(x, 0.5, training=True, rng=rng(21))
    kept = out[out != 0]
    assert np.allclose(kept, 2.0)
    assert np.array_equal(dropout_backward(np.ones_like(x), mask), mask)


def test_dropout_rejects_bad_rate():
    with pytest.raises(ValueError):
        dropout_forward(np.ones(3), 1.0, training=True, rng=rng(0))


def test_batchnorm_normalizes_training_batch():
    bn = BatchNorm(4, dtype=np.float64)
    x = rng(22).normal(loc=3.0, scale=2.0, size=(64, 4))
    out, _ = bn.forward(x, training=True)
    assert np.allclose(out.mean(axis=0), 0.0, atol=1e-12)
    # unit variance up to the epsilon in the denominator
    assert np.allclose(out.var(axis=0), 1.0, atol=1e-3)


def test_batchnorm_constant_batch_maps_to_beta():
    bn = BatchNorm(3, dtype=np.float64)
    bn.beta[...] = 0.7
    out, _ = bn.forward(np.full((5, 3), 9.0), training=True)
    assert np.allclose(out, 0.7)


def test_batchnorm_inference_uses_running_stats():
    bn = BatchNorm(2, dtype=np.float64)
    bn.running_mean[...] = np.array([1.0, -1.0])
    bn.running_var[...] = np.array([4.0, 0.25])
    bn.gamma[...] = np.array([2.0, 1.0])
    bn.beta[...] = np.array([0.0, 5.0])
    x = np.array([[3.0, 0.0]])
    out, cache = bn.forward(x, training=False)
    assert cache is None
    expected = np.array(
        [
            2.0 * (3.0 - 1.0) / math.sqrt(4.0 + 1e-3),
            (0.0 + 1.0) / math.sqrt(0.25 + 1e-3) + 5.0,
        ]
    )
    assert np.allclose(out[0], expected, atol=1e-12)


def test_batchnorm_updates_running_stats():
    bn = BatchNorm(1, dtype=np.float64)
    x = np.array([[1.0], [3.0]])  # mean 2, biased var 1
    bn.forward(x, training=True)
    assert np.allclose(bn.running_mean, 0.99 * 0.0 + 0.01 * 2.0)
    assert np.allclose(bn.running_var, 0.99 * 1.0 + 0.01 * 1.0)


def test_batchnorm_single_row_training_is_an_error():
    bn = BatchNorm(3)
    with pytest.raises(StatisticsError):
        bn.forward(np.ones((1, 3)), training=True)


def test_softmax_uniform_on_equal_logits():
    assert np.allclose(softmax(np.zeros(2)), [0.5, 0.5])


def test_softmax_shift_invariance():
    logits = rng(23).normal(size=(4, 7))
    assert np.allclose(softmax(logits), softmax(logits + 123.0), atol=1e-12)


def test_dense_softmax_matches_straight_line():
    dense = Dense(3, 4, rng=rng(24), dtype=np.float64)
    x = rng(25).normal(size=3)
    probs = dense_softmax(dense, x)
    logits = [
        sum(dense.weight[row, col] * x[col] for col in range(3)) + dense.bias[row]
        for row in range(4)
    ]
    exp = [math.exp(v) for v in logits]
    expected = [v / sum(exp) for v in exp]
    assert np.allclose(probs, expected, atol=1e-12)
    assert abs(probs.sum() - 1.0) < 1e-12


def test_cross_entropy_reference_points():
    assert cross_entropy(np.array([0.0, 1.0]), 1) == 0.0
    uniform = np.full(8, 1.0 / 8)
    assert abs(cross_entropy(uniform, 3) - math.log(8)) < 1e-12
    # the floor keeps an impossible label finite
    assert cross_entropy(np.array([1.0, 0.0]), 1) == -math.log(1e-12)


def test_batch_cross_entropy_is_mean_of_rows():
    probs = np.array([[0.25, 0.75], [0.5, 0.5]])
    labels = np.array([1, 0])
    expected = (cross_entropy(probs[0], 1) + cross_entropy(probs[1], 0)) / 2
    assert abs(batch_cross_entropy(probs, labels) - expected) < 1e-12
