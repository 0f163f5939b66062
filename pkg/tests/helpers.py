"""Shared oracles and fixtures for the test suite."""

import numpy as np

from seizenet.layers_cnn import NetworkConfig


def numeric_grad(f, x, h=1e-6, order=2):
    """Central finite differences of scalar ``f()`` w.r.t. array ``x`` (perturbed in place).

    ``order=4`` uses the five-point stencil, which tolerates a larger ``h``
    and so loses less to cancellation when gradient entries are tiny.
    """
    g = np.zeros_like(x)
    it = np.nditer(x, flags=["multi_index"])
    for _ in it:
        idx = it.multi_index
        orig = x[idx]

        def at(step):
            x[idx] = orig + step
            return f()

        if order == 2:
            g[idx] = (at(h) - at(-h)) / (2 * h)
        else:
            g[idx] = (8 * (at(h) - at(-h)) - (at(2 * h) - at(-2 * h))) / (12 * h)
        x[idx] = orig
    return g


def rel_error(a, b, floor=1e-8):
    """Largest elementwise ``|a - b| / max(|a| + |b|, floor)``."""
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    return float(np.max(np.abs(a - b) / np.maximum(np.abs(a) + np.abs(b), floor)))


def tiny_config(rnn_kind="lstm", **kw):
    """Miniature network: two conv stages on 4x6 frames, hidden size 3."""
    base = dict(
        input_shape=(6, 4, 6, 1),
        conv_channels=(2, 2),
        pool_sizes=(2, 2),
        conv1d_channels=2,
        pool1d_size=2,
        rnn_kind=rnn_kind,
        hidden_sizes=(3, 3),
    )
    base.update(kw)
    return NetworkConfig(**base)


def toy_config(rnn_kind="lstm", **kw):
    """Small three-stage network used for the convergence and stall checks."""
    base = dict(
        input_shape=(16, 8, 8, 1),
        conv_channels=(4, 4, 4),
        pool_sizes=(2, 2, 2),
        conv1d_channels=4,
        pool1d_size=4,
        rnn_kind=rnn_kind,
        hidden_sizes=(8, 8),
    )
    base.update(kw)
    return NetworkConfig(**base)


def toy_dataset(n=20, shape=(16, 8, 8, 1), seed=1234):
    """Balanced, linearly separable windows: seizure windows carry a bright patch."""
    rng = np.random.default_rng(seed)
    labels = np.arange(n) % 2
    x = rng.normal(0.0, 0.5, size=(n,) + shape)
    x[labels == 1, :, 2:6, 2:6, :] += 1.5
    return x, labels


def synthetic_record(duration=30.0, n_channels=22, sample_rate=250.0, seizure=(10.0, 20.0), seed=0):
    """Noise on every channel plus a strong 6 Hz rhythm inside ``seizure``."""
    from seizenet.features import SignalRecord

    rng = np.random.default_rng(seed)
    n = int(round(duration * sample_rate))
    t = np.arange(n) / sample_rate
    x = rng.normal(0.0, 10.0, size=(n_channels, n))
    if seizure is not None:
        on = (t >= seizure[0]) & (t < seizure[1])
        x[:, on] += 80.0 * np.sin(2 * np.pi * 6.0 * t[on])
    return SignalRecord(sample_rate, tuple(f"ch{i}" for i in range(n_channels)), x)


# small settings shared by the command-line tests: 4 channels, 1.6 s windows
SMALL_FEATURES = ["--n-channels", "4", "--window-s", "1.6"]
SMALL_NETWORK = [
    "--conv-channels", "3,3",
    "--pool-sizes", "2,2",
    "--conv1d-channels", "3",
    "--pool1d-size", "4",
    "--hidden-sizes", "4,4",
]
