import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from percept.layers import (
    LSTM, BatchNorm, Conv2D, Dense, Dropout, Flatten, MaxPool2D, Network, ReLU, Softmax,
    batchnorm_forward, conv2d_forward, dense_forward, dropout_backward, dropout_forward,
    infer_shapes, lstm_cell_step, lstm_forward, maxpool2d_backward, maxpool2d_forward,
    network_backward, network_forward, relu, softmax, spec_from_dict, spec_to_dict,
)
from percept.pipelines import build_eye_model
from percept.tensor import Prng

from oracles import conv_reference




# ---------------------------------------------------------------- specs


def test_spec_validation():
    with pytest.raises(ValueError):
        Conv2D(0)
    with pytest.raises(ValueError):
        Conv2D(2, padding="full")
    with pytest.raises(ValueError):
        Dropout(1.0)
    with pytest.raises(ValueError):
        Dropout(0.0)
    with pytest.raises(ValueError):
        BatchNorm(epsilon=0.0)
    with pytest.raises(ValueError):
        Dense(0)
    with pytest.raises(ValueError):
        MaxPool2D(0, 2)


def test_spec_dict_round_trip():
    for spec in [Conv2D(4, 3, 5, 2, "same"), MaxPool2D(), Dense(3), ReLU(), Softmax(), Dropout(0.25),
                 BatchNorm(0.8, 1e-3), Flatten(), LSTM(7, True)]:
        assert spec_from_dict(spec_to_dict(spec)) == spec
    with pytest.raises(ValueError):
        spec_from_dict({"kind": "attention"})
    with pytest.raises(ValueError):
        spec_from_dict({"kind": "dense", "units": 2, "bias": False})


# ---------------------------------------------------------------- conv


def test_conv_examples():
    x = np.arange(1, 5, dtype=np.float32).reshape(1, 1, 2, 2)
    one = {"W": np.ones((1, 1, 1, 1), np.float32), "b": np.zeros(1, np.float32)}
    assert np.array_equal(conv2d_forward(x, one, Conv2D(1, 1, 1))[0], x)
    ones = {"W": np.ones((1, 1, 2, 2), np.float32), "b": np.zeros(1, np.float32)}
    assert conv2d_forward(x, ones, Conv2D(1, 2, 2))[0].tolist() == [[[[10.0]]]]
    big = {"W": np.ones((1, 1, 3, 3), np.float32), "b": np.zeros(1, np.float32)}
    with pytest.raises(ValueError):
        conv2d_forward(x, big, Conv2D(1, 3, 3))


def test_conv_no_kernel_flip():
    x = np.zeros((1, 1, 3, 3), np.float32)
    x[0, 0, 0, 0] = 1.0
    w = np.arange(9, dtype=np.float32).reshape(1, 1, 3, 3)
    out = conv2d_forward(x, {"W": w, "b": np.zeros(1, np.float32)}, Conv2D(1, padding="same"))[0]
    # top-left input pixel meets kernel tap (1, 1) + offset; cross-correlation reads w[i, j] directly
    assert out[0, 0, 0, 0] == w[0, 0, 1, 1]
    assert out[0, 0, 1, 1] == w[0, 0, 0, 0]


@settings(max_examples=60, deadline=None)
@given(
    st.integers(1, 3), st.integers(1, 8), st.integers(1, 8), st.integers(1, 3), st.integers(1, 3),
    st.integers(1, 3), st.integers(1, 2), st.sampled_from(["valid", "same"]), st.integers(0, 2**32),
)
def test_conv_matches_nested_loops_exactly(c, h, w, f, kh, kw, stride, padding, seed):
    if padding == "valid" and (kh > h or kw > w):
        return
    rng = np.random.default_rng(seed)
    x = rng.standard_normal((2, c, h, w)).astype(np.float32)
    params = {"W": rng.standard_normal((f, c, kh, kw)).astype(np.float32),
              "b": rng.standard_normal(f).astype(np.float32)}
    got = conv2d_forward(x, params, Conv2D(f, kh, kw, stride, padding))[0]
    assert np.array_equal(got, conv_reference(x, params["W"], params["b"], stride, padding))


def test_conv_output_sizes():
    x = np.zeros((1, 1, 7, 7), np.float32)
    p = {"W": np.zeros((1, 1, 3, 3), np.float32), "b": np.zeros(1, np.float32)}
    assert conv2d_forward(x, p, Conv2D(1, stride=2))[0].shape == (1, 1, 3, 3)
    assert conv2d_forward(x, p, Conv2D(1, stride=2, padding="same"))[0].shape == (1, 1, 4, 4)
    assert conv2d_forward(x, p, Conv2D(1, padding="same"))[0].shape == (1, 1, 7, 7)


# ---------------------------------------------------------------- pooling


def test_maxpool_examples():
    x = np.array([[[[1, 2], [3, 4]]]], np.float32)
    assert maxpool2d_forward(x, MaxPool2D())[0].tolist() == [[[[4.0]]]]
    const = np.full((1, 2, 4, 4), 0.3, np.float32)
    assert np.all(maxpool2d_forward(const, MaxPool2D())[0] == np.float32(0.3))
    with pytest.raises(ValueError):
        maxpool2d_forward(np.arange(6, dtype=np.float32).reshape(1, 1, 2, 3), MaxPool2D())


@settings(max_examples=40, deadline=None)
@given(st.integers(1, 3), st.integers(1, 4), st.integers(1, 4), st.integers(0, 2**32))
def test_maxpool_backward_conserves_gradient(c, hh, ww, seed):
    rng = np.random.default_rng(seed)
    x = rng.integers(-3, 3, size=(2, c, 2 * hh, 2 * ww)).astype(np.float64)  # ties on purpose
    out, cache = maxpool2d_forward(x, MaxPool2D())
    dout = rng.integers(-5, 5, size=out.shape).astype(np.float64)
    dx, _ = maxpool2d_backward(dout, cache)
    assert dx.sum() == dout.sum()
    assert np.count_nonzero(dx) <= np.count_nonzero(dout)


def test_maxpool_first_max_wins():
    x = np.array([[[[5, 5], [5, 5]]]], np.float64)
    _, cache = maxpool2d_forward(x, MaxPool2D())
    dx, _ = maxpool2d_backward(np.ones((1, 1, 1, 1)), cache)
    assert dx.tolist() == [[[[1, 0], [0, 0]]]]


# ---------------------------------------------------------------- dense / activations


def test_dense_examples():
    x = np.array([[1.0, 2.0]], np.float32)
    eye = {"W": np.eye(2, dtype=np.float32), "b": np.zeros(2, np.float32)}
    assert np.array_equal(dense_forward(x, eye)[0], x)
    p = {"W": np.array([[1.0], [1.0]], np.float32), "b": np.array([0.5], np.float32)}
    assert dense_forward(x, p)[0].tolist() == [[3.5]]
    with pytest.raises(ValueError):
        dense_forward(np.ones((1, 3), np.float32), p)


def test_relu_softmax_examples():
    assert relu(np.array([-1.0, 0.0, 2.0])).tolist() == [0.0, 0.0, 2.0]
    assert softmax(np.array([0.0, 0.0])).tolist() == [0.5, 0.5]
    p = softmax(np.log(np.array([1.0, 2.0, 3.0])))
    assert np.allclose(p, [1 / 6, 2 / 6, 3 / 6], atol=1e-15)


@settings(max_examples=80, deadline=None)
@given(st.lists(st.floats(-300, 300), min_size=1, max_size=10), st.floats(-500, 500))
def test_softmax_simplex_and_shift_invariance(logits, shift):
    z = np.array(logits)
    p = softmax(z)
    assert abs(p.sum() - 1.0) <= 1e-6 and np.all(p >= 0)
    assert np.max(np.abs(softmax(z + shift) - p)) <= 1e-6


def test_softmax_rows():
    z = np.random.default_rng(0).normal(size=(5, 4)) * 20
    assert np.allclose(softmax(z).sum(axis=1), 1.0, atol=1e-12)


# ---------------------------------------------------------------- dropout


def test_dropout_contract():
    x = np.ones(100_000, np.float32)
    out, mask = dropout_forward(x, 0.5, train=True, prng=Prng(3))
    assert 0.98 <= out.mean() <= 1.02
    assert set(np.unique(out).tolist()) <= {0.0, 2.0}
    same, _ = dropout_forward(x, 0.5, train=True, prng=Prng(3))
    assert np.array_equal(out, same)
    dx, _ = dropout_backward(np.ones_like(x), mask)
    assert np.array_equal(dx, out)
    with pytest.raises(ValueError):
        dropout_forward(x, 1.0, train=True, prng=Prng(0))


@settings(max_examples=30, deadline=None)
@given(st.floats(0.01, 0.99), st.integers(0, 2**32))
def test_dropout_infer_is_identity(rate, seed):
    x = np.random.default_rng(seed).normal(size=(3, 7)).astype(np.float32)
    out, cache = dropout_forward(x, rate, train=False)
    assert out is x or np.array_equal(out, x)
    assert cache is None


# ---------------------------------------------------------------- batch norm


def _bn_params(n):
    return {"gamma": np.ones(n), "beta": np.zeros(n), "running_mean": np.zeros(n), "running_var": np.ones(n)}


def test_batchnorm_examples():
    spec = BatchNorm()
    x = np.array([[-1.0], [1.0]])
    out, _ = batchnorm_forward(x, _bn_params(1), spec, train=False)
    assert np.allclose(out, x / math.sqrt(1 + spec.epsilon), atol=0, rtol=1e-15)
    out, cache = batchnorm_forward(x, _bn_params(1), spec, train=True)
    assert np.allclose(out, [[-1.0], [1.0]], atol=1e-5)
    assert np.allclose(cache["running_mean"], [0.0])
    assert np.allclose(cache["running_var"], [0.9 + 0.1 * 1.0])
    with pytest.raises(ValueError):
        batchnorm_forward(np.ones((1, 3)), _bn_params(3), spec, train=True)


def test_batchnorm_conv_statistics_span_space():
    x = np.random.default_rng(1).normal(2.0, 3.0, size=(4, 3, 5, 5))
    out, _ = batchnorm_forward(x, _bn_params(3), BatchNorm(), train=True)
    assert np.allclose(out.mean(axis=(0, 2, 3)), 0.0, atol=1e-12)
    assert np.allclose(out.var(axis=(0, 2, 3)), 1.0, atol=1e-4)


def test_network_forward_commits_running_stats():
    net = Network([Dense(3), BatchNorm()], (2,), Prng(0))
    before = net.params[1]["running_mean"].copy()
    net.forward(np.random.default_rng(0).normal(5, 1, (6, 2)).astype(np.float32), train=True)
    assert not np.array_equal(before, net.params[1]["running_mean"])
    frozen = net.copy_params()
    net.forward(np.ones((6, 2), np.float32), train=False)
    assert all(np.array_equal(a[k], b[k]) for a, b in zip(frozen, net.params) for k in a)


# ---------------------------------------------------------------- LSTM


def _zero_lstm(d, u):
    return {"W": np.zeros((d, 4 * u)), "U": np.zeros((u, 4 * u)), "b": np.zeros(4 * u)}


def test_lstm_cell_hand_values():
    p = _zero_lstm(2, 1)
    h, c = lstm_cell_step(np.array([[0.3, -0.7]]), np.zeros((1, 1)), np.ones((1, 1)), p)
    assert c[0, 0] == pytest.approx(0.5, abs=1e-15)
    assert h[0, 0] == pytest.approx(0.5 * math.tanh(0.5), abs=1e-15)
    assert round(h[0, 0], 6) == 0.231059
    h, c = lstm_cell_step(np.array([[0.3, -0.7]]), np.zeros((1, 1)), np.zeros((1, 1)), p)
    assert h[0, 0] == 0.0 and c[0, 0] == 0.0


def test_lstm_forget_gate_saturation():
    rng = np.random.default_rng(4)
    u = 3
    p = {"W": rng.normal(size=(2, 4 * u)), "U": rng.normal(size=(u, 4 * u)), "b": rng.normal(size=4 * u)}
    p["b"][u:2 * u] = 20.0
    p["W"][:, u:2 * u] = 0.0
    p["U"][:, u:2 * u] = 0.0
    x, h0, c0 = rng.normal(size=(1, 2)), rng.normal(size=(1, u)), rng.normal(size=(1, u))
    _, c = lstm_cell_step(x, h0, c0, p)
    z = x @ p["W"] + h0 @ p["U"] + p["b"]
    i = 1 / (1 + np.exp(-z[:, :u]))
    g = np.tanh(z[:, 2 * u:3 * u])
    assert np.max(np.abs(c - (c0 + i * g))) < 1e-6


def test_lstm_sequence_contracts():
    rng = np.random.default_rng(2)
    net = Network([LSTM(4)], (1, 3), Prng(9)).astype(np.float64)
    p = net.params[0]
    x = rng.normal(size=(2, 1, 3))
    h, _ = lstm_cell_step(x[:, 0], np.zeros((2, 4)), np.zeros((2, 4)), p)
    assert np.array_equal(lstm_forward(x, p, LSTM(4))[0], h)

    zero = _zero_lstm(3, 4)
    assert np.all(lstm_forward(rng.normal(size=(2, 6, 3)), zero, LSTM(4))[0] == 0.0)

    x = rng.normal(size=(1, 5, 3))
    seq = lstm_forward(x, p, LSTM(4, True))[0]
    assert seq.shape == (1, 5, 4)
    assert np.array_equal(seq[:, -1], lstm_forward(x, p, LSTM(4))[0])
    rev = lstm_forward(x[:, ::-1], p, LSTM(4))[0]
    assert np.max(np.abs(rev - seq[:, -1])) > 1e-3
    with pytest.raises(ValueError):
        lstm_forward(np.zeros((1, 0, 3)), p, LSTM(4))
    with pytest.raises(ValueError):
        lstm_forward(np.zeros((1, 2, 5)), p, LSTM(4))


# ---------------------------------------------------------------- composition


def test_network_examples():
    x = np.random.default_rng(0).normal(size=(3, 4)).astype(np.float32)
    out, _ = network_forward([], [], x)
    assert np.array_equal(out, x)
    out, _ = network_forward([Flatten()], [{}], np.zeros((1, 1, 2, 2), np.float32))
    assert out.shape == (1, 4)
    eye = Network(build_eye_model(), (1, 64, 64), Prng(0))
    p, _ = eye.forward(np.random.default_rng(1).random((1, 1, 64, 64)).astype(np.float32))
    assert p.shape == (1, 2)
    assert abs(float(p.sum()) - 1.0) < 1e-6


def test_incompatible_layers_rejected_at_build():
    with pytest.raises(ValueError, match="layer 1"):
        infer_shapes([Flatten(), Conv2D(2)], (1, 4, 4))
    with pytest.raises(ValueError):
        Network([Dense(3)], (2, 2), Prng(0))


def test_identity_dense_passes_gradient_through():
    params = [{"W": np.eye(3), "b": np.zeros(3)}]
    x = np.random.default_rng(0).normal(size=(2, 3))
    _, caches = network_forward([Dense(3)], params, x, train=True)
    dout = np.random.default_rng(1).normal(size=(2, 3))
    dx, _ = network_backward([Dense(3)], caches, dout)
    assert np.array_equal(dx, dout)
    with pytest.raises(ValueError):
        network_backward([Dense(3)], None, dout)


def test_init_conventions():
    net = Network([Conv2D(4), BatchNorm(), ReLU(), Flatten(), Dense(3)], (1, 5, 5), Prng(0))
    he = math.sqrt(6.0 / 9)
    assert np.abs(net.params[0]["W"]).max() <= he
    assert np.abs(net.params[0]["W"]).max() > math.sqrt(6.0 / (9 + 36))  # wider than Glorot would allow
    lstm = Network([LSTM(5)], (2, 3), Prng(0))
    b = lstm.params[0]["b"]
    assert np.all(b[5:10] == 1.0) and np.all(b[:5] == 0) and np.all(b[10:] == 0)


def test_infer_mode_is_deterministic_with_dropout():
    net = Network([Dense(4), Dropout(0.5), Dense(2), Softmax()], (3,), Prng(1))
    x = np.ones((2, 3), np.float32)
    assert np.array_equal(net.forward(x)[0], net.forward(x)[0])
