import dataclasses

import numpy as np
import pytest

from helpers import numeric_grad, rel_error
from seizenet import layers_cnn as L
from seizenet.errors import ConfigError, DimensionError


def loop_conv2d(x, k, b):
    """Quadruple-loop same-padded cross-correlation over (N, H, W, C)."""
    n, h, w, c = x.shape
    kh, kw, _, o = k.shape
    ph, pw = (kh - 1) // 2, (kw - 1) // 2
    out = np.zeros((n, h, w, o))
    for s in range(n):
        for i in range(h):
            for j in range(w):
                for oc in range(o):
                    acc = b[oc]
                    for di in range(kh):
                        for dj in range(kw):
                            ii, jj = i + di - ph, j + dj - pw
                            if 0 <= ii < h and 0 <= jj < w:
                                acc += np.dot(x[s, ii, jj, :], k[di, dj, :, oc])
                    out[s, i, j, oc] = acc
    return out


def loop_conv1d(x, k, b):
    t, c = x.shape
    ks, _, o = k.shape
    p = (ks - 1) // 2
    out = np.zeros((t, o))
    for i in range(t):
        for oc in range(o):
            acc = b[oc]
            for d in range(ks):
                ii = i + d - p
                if 0 <= ii < t:
                    acc += np.dot(x[ii], k[d, :, oc])
            out[i, oc] = acc
    return out


rng = np.random.default_rng(42)


def test_conv2d_single_pixel():
    k = rng.normal(size=(3, 3, 1, 1))
    y, _ = L.conv2d_forward(np.array([[[[2.0]]]]), k, np.array([0.5]))
    assert y.shape == (1, 1, 1, 1)
    assert y[0, 0, 0, 0] == pytest.approx(k[1, 1, 0, 0] * 2.0 + 0.5)


def test_conv2d_delta_kernel_is_identity():
    x = rng.normal(size=(2, 5, 6, 3))
    k = np.zeros((3, 3, 3, 3))
    for c in range(3):
        k[1, 1, c, c] = 1.0
    y, _ = L.conv2d_forward(x, k, np.zeros(3))
    np.testing.assert_array_equal(y, x)


def test_conv2d_matches_loop():
    x = rng.normal(size=(1, 5, 5, 2))
    k = rng.normal(size=(3, 3, 2, 2))
    b = rng.normal(size=2)
    y, _ = L.conv2d_forward(x, k, b)
    np.testing.assert_allclose(y, loop_conv2d(x, k, b), atol=1e-10)


def test_conv2d_leading_axes():
    x = rng.normal(size=(2, 3, 4, 5, 1))
    k = rng.normal(size=(3, 3, 1, 2))
    y, _ = L.conv2d_forward(x, k, np.zeros(2))
    assert y.shape == (2, 3, 4, 5, 2)
    np.testing.assert_allclose(y.reshape(6, 4, 5, 2), loop_conv2d(x.reshape(6, 4, 5, 1), k, np.zeros(2)), atol=1e-12)


def test_conv2d_channel_mismatch():
    with pytest.raises(DimensionError):
        L.conv2d_forward(np.zeros((1, 4, 4, 2)), np.zeros((3, 3, 1, 2)), np.zeros(2))


def test_conv2d_gradients():
    x = rng.normal(size=(2, 4, 5, 2))
    k = rng.normal(size=(3, 3, 2, 3))
    b = rng.normal(size=3)
    w = rng.normal(size=(2, 4, 5, 3))

    def f():
        return float(np.sum(L.conv2d_forward(x, k, b)[0] * w))

    _, cache = L.conv2d_forward(x, k, b)
    dx, dk, db = L.conv2d_backward(w, cache)
    assert rel_error(dx, numeric_grad(f, x)) < 1e-4
    assert rel_error(dk, numeric_grad(f, k)) < 1e-4
    assert rel_error(db, numeric_grad(f, b)) < 1e-4


def test_maxpool2d_shapes_follow_floor():
    shapes = []
    x = np.zeros((1, 22, 26, 1))
    for _ in range(3):
        x, _ = L.maxpool2d(x, 2)
        shapes.append(x.shape[1:3])
    assert shapes == [(11, 13), (5, 6), (2, 3)]
    assert 2 * 3 * 64 == 384


def test_maxpool2d_ties_route_to_first_index():
    x = np.ones((1, 4, 4, 1))
    y, cache = L.maxpool2d(x, 2)
    assert np.all(y == 1)
    dx = L.maxpool2d_backward(np.ones_like(y), cache)
    assert dx.sum() == 4
    np.testing.assert_array_equal(dx[0, ::2, ::2, 0], np.ones((2, 2)))


def test_maxpool2d_sentinels():
    x = rng.uniform(-1, 0, size=(1, 4, 6, 2))
    x[0, 1, 0, 0] = 5.0
    x[0, 2, 5, 1] = 7.0
    y, _ = L.maxpool2d(x, 2)
    assert y[0, 0, 0, 0] == 5.0 and y[0, 1, 2, 1] == 7.0


def test_maxpool2d_too_small():
    with pytest.raises(DimensionError):
        L.maxpool2d(np.zeros((1, 1, 4, 1)), 2)


def test_maxpool2d_gradient():
    # distinct values so the argmax is stable under perturbation
    x = rng.permutation(np.arange(2 * 5 * 7 * 2, dtype=float)).reshape(2, 5, 7, 2) * 0.1
    w = rng.normal(size=(2, 2, 3, 2))

    def f():
        return float(np.sum(L.maxpool2d(x, 2)[0] * w))

    _, cache = L.maxpool2d(x, 2)
    assert rel_error(L.maxpool2d_backward(w, cache), numeric_grad(f, x, h=1e-4)) < 1e-4


def test_flatten_time():
    assert L.flatten_time(np.zeros((210, 2, 3, 64))).shape == (210, 384)
    assert L.flatten_time(np.zeros((1, 1, 1, 1))).shape == (1, 1)
    x = rng.normal(size=(3, 2, 3, 4))
    np.testing.assert_array_equal(L.unflatten_time(L.flatten_time(x), (2, 3, 4)), x)
    # per-frame row-major
    np.testing.assert_array_equal(L.flatten_time(x)[1], x[1].ravel())


def test_conv1d_matches_loop():
    x = rng.normal(size=(9, 4))
    k = rng.normal(size=(3, 4, 2))
    b = rng.normal(size=2)
    y, _ = L.conv1d_forward(x, k, b)
    np.testing.assert_allclose(y, loop_conv1d(x, k, b), atol=1e-12)


def test_conv1d_shift_kernel():
    x = rng.normal(size=(8, 1))
    k = np.zeros((3, 1, 1))
    k[0, 0, 0] = 1.0  # x[t-1]
    k[2, 0, 0] = 1.0  # x[t+1]
    y, _ = L.conv1d_forward(x, k, np.zeros(1))
    expected = np.zeros(8)
    expected[1:] += x[:-1, 0]
    expected[:-1] += x[1:, 0]
    np.testing.assert_allclose(y[:, 0], expected, atol=1e-15)


def test_conv1d_constant_input_interior_constant():
    x = np.full((12, 3), 2.0)
    k = rng.normal(size=(3, 3, 2))
    y, _ = L.conv1d_forward(x, k, np.zeros(2))
    assert np.allclose(y[1:-1], y[1])


def test_conv1d_reference_dims():
    y, _ = L.conv1d_forward(np.zeros((210, 384)), np.zeros((3, 384, 16)), np.zeros(16))
    assert y.shape == (210, 16)
    p, _ = L.maxpool1d(y, 8)
    assert p.shape == (26, 16)


def test_conv1d_errors():
    with pytest.raises(DimensionError):
        L.conv1d_forward(np.zeros((2, 3)), np.zeros((3, 3, 1)), np.zeros(1))
    with pytest.raises(DimensionError):
        L.maxpool1d(np.zeros((5, 3)), 8)


def test_conv1d_and_pool1d_gradients():
    x = rng.normal(size=(2, 10, 3))
    k = rng.normal(size=(3, 3, 2))
    b = rng.normal(size=2)
    w = rng.normal(size=(2, 3, 2))

    def f():
        y, _ = L.conv1d_forward(x, k, b)
        return float(np.sum(L.maxpool1d(y, 3)[0] * w))

    y, c1 = L.conv1d_forward(x, k, b)
    _, c2 = L.maxpool1d(y, 3)
    dx, dk, db = L.conv1d_backward(L.maxpool1d_backward(w, c2), c1)
    assert rel_error(dx, numeric_grad(f, x)) < 1e-4
    assert rel_error(dk, numeric_grad(f, k)) < 1e-4
    assert rel_error(db, numeric_grad(f, b)) < 1e-4


def test_head_zero_weights():
    y, _ = L.dense_sigmoid_head(rng.normal(size=7), np.zeros((7, 2)), np.zeros(2))
    np.testing.assert_array_equal(y, [0.5, 0.5])


def test_head_range_and_independence():
    x = rng.normal(size=(50, 6)) * 2
    y, _ = L.dense_sigmoid_head(x, rng.normal(size=(6, 2)), rng.normal(size=2))
    assert np.all((y > 0) & (y < 1))
    assert not np.allclose(y.sum(axis=1), 1.0)


def test_head_gradient():
    x = rng.normal(size=(3, 5))
    wt = rng.normal(size=(5, 2))
    b = rng.normal(size=2)
    up = rng.normal(size=(3, 2))

    def f():
        return float(np.sum(L.dense_sigmoid_head(x, wt, b)[0] * up))

    _, cache = L.dense_sigmoid_head(x, wt, b)
    dx, dw, db = L.dense_sigmoid_head_backward(up, cache)
    assert rel_error(dx, numeric_grad(f, x)) < 1e-5
    assert rel_error(dw, numeric_grad(f, wt)) < 1e-5
    assert rel_error(db, numeric_grad(f, b)) < 1e-5


def test_reference_chain():
    cfg = L.NetworkConfig.reference()
    assert cfg.shape_chain() == L.REFERENCE_CHAIN
    assert cfg.head_input_dim == 512


@pytest.mark.parametrize(
    "change",
    [
        {"pool_sizes": (2, 2, 3)},
        {"pool_sizes": (3, 2, 2)},
        {"conv_channels": (16, 32, 32)},
        {"pool1d_size": 4},
        {"conv1d_channels": 8},
        {"hidden_sizes": (128, 128)},
        {"bidirectional": False},
    ],
)
def test_mutated_reference_rejected(change):
    with pytest.raises(ConfigError):
        dataclasses.replace(L.NetworkConfig.reference(), **change)


def test_structurally_invalid_configs():
    with pytest.raises(ConfigError):
        L.NetworkConfig(input_shape=(6, 4, 6, 1), conv_channels=(2, 2, 2), pool_sizes=(2, 2, 2))
    with pytest.raises(ConfigError):
        L.NetworkConfig(rnn_kind="rnn")
    with pytest.raises(ConfigError):
        L.NetworkConfig(pool_sizes=(2, 2))


def test_config_dict_roundtrip():
    cfg = L.NetworkConfig(rnn_kind="gru", hidden_sizes=(4, 5))
    assert L.NetworkConfig.from_dict(cfg.to_dict()) == cfg
