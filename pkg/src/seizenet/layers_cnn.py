"""Convolutional front end: frame-wise 2D conv/pool stages, flatten, 1D conv/pool, sigmoid head.

All layers are plain functions with an explicit backward. Forward
functions return ``(output, cache)``; the matching ``*_backward`` takes
the upstream gradient and that cache. Leading axes are treated as batch
axes, so a window ``(T, H, W, C)`` or a batch ``(B, T, H, W, C)`` go through
the 2D layers unchanged.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from .errors import ConfigError, DimensionError
from .tensor_core import sigmoid


def _same_pad(k: int) -> tuple[int, int]:
    lo = (k - 1) // 2
    return lo, k - 1 - lo


# ------------------------------------------------------------------ conv2d

def conv2d_forward(x: np.ndarray, kernel: np.ndarray, bias: np.ndarray):
    """Stride-1 cross-correlation with zero "same" padding.

    ``x`` is ``(..., H, W, C)``, ``kernel`` is ``(kh, kw, C, O)``.
    """
    kh, kw, c_in, c_out = kernel.shape
    if x.shape[-1] != c_in:
        raise DimensionError(f"conv2d expects {c_in} input channels, got input shape {x.shape}")
    lead = x.shape[:-3]
    h, w = x.shape[-3:-1]
    x4 = x.reshape((-1, h, w, c_in))
    (ph0, ph1), (pw0, pw1) = _same_pad(kh), _same_pad(kw)
    xp = np.pad(x4, ((0, 0), (ph0, ph1), (pw0, pw1), (0, 0)))
    # (N, H, W, C, kh, kw) -> (N, H, W, kh, kw, C)
    win = sliding_window_view(xp, (kh, kw), axis=(1, 2)).transpose(0, 1, 2, 4, 5, 3)
    cols = win.reshape(-1, kh * kw * c_in)
    y = cols @ kernel.reshape(-1, c_out) + bias
    y = y.reshape(lead + (h, w, c_out))
    return y, (cols, x.shape, kernel)


def conv2d_backward(dy: np.ndarray, cache):
    cols, x_shape, kernel = cache
    kh, kw, c_in, c_out = kernel.shape
    h, w = x_shape[-3:-1]
    dy2 = dy.reshape(-1, c_out)
    dkernel = (cols.T @ dy2).reshape(kernel.shape)
    dbias = dy2.sum(axis=0)
    dcols = (dy2 @ kernel.reshape(-1, c_out).T).reshape(-1, h, w, kh, kw, c_in)
    (ph0, ph1), (pw0, pw1) = _same_pad(kh), _same_pad(kw)
    dxp = np.zeros((dcols.shape[0], h + ph0 + ph1, w + pw0 + pw1, c_in))
    for i in range(kh):
        for j in range(kw):
            dxp[:, i:i + h, j:j + w, :] += dcols[:, :, :, i, j, :]
    dx = dxp[:, ph0:ph0 + h, pw0:pw0 + w, :].reshape(x_shape)
    return dx, dkernel, dbias


# --------------------------------------------------------------- maxpool2d

def maxpool2d(x: np.ndarray, size: int = 2):
    """Non-overlapping max pooling over ``(H, W)``; trailing rows/cols are dropped.

    Ties route the gradient to the lowest index inside the pooling window.
    """
    h, w, c = x.shape[-3:]
    if h < size or w < size:
        raise DimensionError(f"maxpool2d of size {size} needs H, W >= {size}, got input shape {x.shape}")
    lead = x.shape[:-3]
    ho, wo = h // size, w // size
    xc = x[..., :ho * size, :wo * size, :].reshape((-1, ho, size, wo, size, c))
    blocks = xc.transpose(0, 1, 3, 5, 2, 4).reshape(-1, ho, wo, c, size * size)
    arg = np.argmax(blocks, axis=-1)
    y = np.take_along_axis(blocks, arg[..., None], axis=-1)[..., 0]
    return y.reshape(lead + (ho, wo, c)), (arg, x.shape, size)


def maxpool2d_backward(dy: np.ndarray, cache):
    arg, x_shape, size = cache
    h, w, c = x_shape[-3:]
    ho, wo = h // size, w // size
    dblocks = np.zeros(arg.shape + (size * size,))
    np.put_along_axis(dblocks, arg[..., None], dy.reshape(arg.shape)[..., None], axis=-1)
    dxc = dblocks.reshape(-1, ho, wo, c, size, size).transpose(0, 1, 4, 2, 5, 3)
    dx = np.zeros((dxc.shape[0], h, w, c))
    dx[:, :ho * size, :wo * size, :] = dxc.reshape(-1, ho * size, wo * size, c)
    return dx.reshape(x_shape)


# ----------------------------------------------------------------- flatten

def flatten_time(x: np.ndarray) -> np.ndarray:
    """``(..., T, H, W, C) -> (..., T, H*W*C)``, row-major per frame."""
    return x.reshape(x.shape[:-3] + (-1,))


def unflatten_time(x: np.ndarray, frame_shape) -> np.ndarray:
    return x.reshape(x.shape[:-1] + tuple(frame_shape))


# ------------------------------------------------------------------ conv1d

def conv1d_forward(x: np.ndarray, kernel: np.ndarray, bias: np.ndarray):
    """Same-padded stride-1 convolution along time: ``(..., T, C) -> (..., T, O)``.

    ``kernel`` is ``(k, C, O)``.
    """
    k, c_in, c_out = kernel.shape
    if x.shape[-1] != c_in:
        raise DimensionError(f"conv1d expects {c_in} input channels, got input shape {x.shape}")
    t = x.shape[-2]
    if t < k:
        raise DimensionError(f"conv1d kernel of size {k} needs T >= {k}, got T={t}")
    lead = x.shape[:-2]
    x3 = x.reshape((-1, t, c_in))
    p0, p1 = _same_pad(k)
    xp = np.pad(x3, ((0, 0), (p0, p1), (0, 0)))
    cols = sliding_window_view(xp, k, axis=1).transpose(0, 1, 3, 2).reshape(-1, k * c_in)
    y = cols @ kernel.reshape(-1, c_out) + bias
    return y.reshape(lead + (t, c_out)), (cols, x.shape, kernel)


def conv1d_backward(dy: np.ndarray, cache):
    cols, x_shape, kernel = cache
    k, c_in, c_out = kernel.shape
    t = x_shape[-2]
    dy2 = dy.reshape(-1, c_out)
    dkernel = (cols.T @ dy2).reshape(kernel.shape)
    dbias = dy2.sum(axis=0)
    dcols = (dy2 @ kernel.reshape(-1, c_out).T).reshape(-1, t, k, c_in)
    p0, p1 = _same_pad(k)
    dxp = np.zeros((dcols.shape[0], t + p0 + p1, c_in))
    for i in range(k):
        dxp[:, i:i + t, :] += dcols[:, :, i, :]
    return dxp[:, p0:p0 + t, :].reshape(x_shape), dkernel, dbias


# --------------------------------------------------------------- maxpool1d

def maxpool1d(x: np.ndarray, size: int):
    t, c = x.shape[-2:]
    if t < size:
        raise DimensionError(f"maxpool1d of size {size} needs T >= {size}, got T={t}")
    lead = x.shape[:-2]
    to = t // size
    blocks = x[..., :to * size, :].reshape((-1, to, size, c)).transpose(0, 1, 3, 2)
    arg = np.argmax(blocks, axis=-1)
    y = np.take_along_axis(blocks, arg[..., None], axis=-1)[..., 0]
    return y.reshape(lead + (to, c)), (arg, x.shape, size)


def maxpool1d_backward(dy: np.ndarray, cache):
    arg, x_shape, size = cache
    t, c = x_shape[-2:]
    to = t // size
    dblocks = np.zeros(arg.shape + (size,))
    np.put_along_axis(dblocks, arg[..., None], dy.reshape(arg.shape)[..., None], axis=-1)
    dx = np.zeros((dblocks.shape[0], t, c))
    dx[:, :to * size, :] = dblocks.transpose(0, 1, 3, 2).reshape(-1, to * size, c)
    return dx.reshape(x_shape)


# -------------------------------------------------------------------- head

def dense_sigmoid_head(x: np.ndarray, weight: np.ndarray, bias: np.ndarray):
    """Two independent sigmoid outputs ``(seizure, background)``; not normalized."""
    if x.shape[-1] != weight.shape[0]:
        raise DimensionError(f"head expects input dim {weight.shape[0]}, got shape {x.shape}")
    y = sigmoid(x @ weight + bias)
    return y, (x, weight, y)


def dense_sigmoid_head_backward(dy: np.ndarray, cache):
    x, weight, y = cache
    da = dy * y * (1.0 - y)
    x2 = x.reshape(-1, x.shape[-1])
    da2 = da.reshape(-1, da.shape[-1])
    return da @ weight.T, x2.T @ da2, da2.sum(axis=0)


# ------------------------------------------------------------------ config

REFERENCE_CHAIN = (
    ("input", (210, 22, 26, 1)),
    ("conv2d_0", (210, 22, 26, 16)),
    ("pool2d_0", (210, 11, 13, 16)),
    ("conv2d_1", (210, 11, 13, 32)),
    ("pool2d_1", (210, 5, 6, 32)),
    ("conv2d_2", (210, 5, 6, 64)),
    ("pool2d_2", (210, 2, 3, 64)),
    ("flatten", (210, 384)),
    ("conv1d", (210, 16)),
    ("pool1d", (26, 16)),
    ("rnn_0", (26, 256)),
    ("rnn_1", (26, 512)),
    ("head_input", (512,)),
    ("head", (2,)),
)


@dataclass(frozen=True)
class NetworkConfig:
    """Layer plan for the CNN + bidirectional RNN network.

    The shape chain is computed at construction. If ``expected_chain`` is
    set, any config whose chain differs from it is rejected.
    """

    input_shape: tuple = (210, 22, 26, 1)
    conv_channels: tuple = (16, 32, 64)
    conv_kernel: int = 3
    pool_sizes: tuple = (2, 2, 2)
    conv1d_channels: int = 16
    conv1d_kernel: int = 3
    pool1d_size: int = 8
    rnn_kind: str = "lstm"
    hidden_sizes: tuple = (128, 256)
    bidirectional: bool = True
    readout: str = "final"
    expected_chain: tuple | None = field(default=None, compare=False)

    def __post_init__(self):
        for name in ("input_shape", "conv_channels", "pool_sizes", "hidden_sizes"):
            object.__setattr__(self, name, tuple(int(v) for v in getattr(self, name)))
        chain = self.shape_chain()
        if self.expected_chain is not None and chain != tuple(self.expected_chain):
            diffs = [
                f"{a[0]}: expected {a[1]}, got {b[1]}"
                for a, b in zip(self.expected_chain, chain) if a != b
            ]
            if len(chain) != len(self.expected_chain):
                diffs.append(f"expected {len(self.expected_chain)} stages, got {len(chain)}")
            raise ConfigError("shape chain mismatch: " + "; ".join(diffs))

    @classmethod
    def reference(cls, rnn_kind: str = "lstm") -> "NetworkConfig":
        return cls(rnn_kind=rnn_kind, expected_chain=REFERENCE_CHAIN)

    def shape_chain(self) -> tuple:
        """Validate the layer plan and return ``((stage, shape), ...)``."""
        if self.rnn_kind not in ("lstm", "gru"):
            raise ConfigError(f"rnn_kind must be 'lstm' or 'gru', got {self.rnn_kind!r}")
        if self.readout not in ("final", "mean"):
            raise ConfigError(f"readout must be 'final' or 'mean', got {self.readout!r}")
        if len(self.input_shape) != 4 or min(self.input_shape) < 1:
            raise ConfigError(f"input shape must be (T, H, W, C) with positive extents, got {self.input_shape}")
        if len(self.pool_sizes) != len(self.conv_channels):
            raise ConfigError("need one pool size per 2D conv stage")
        if self.conv_kernel < 1 or self.conv1d_kernel < 1:
            raise ConfigError("kernel sizes must be >= 1")
        if not self.hidden_sizes or min(self.hidden_sizes) < 1:
            raise ConfigError("need at least one positive hidden size")
        t, h, w, c = self.input_shape
        chain = [("input", (t, h, w, c))]
        for i, (ch, p) in enumerate(zip(self.conv_channels, self.pool_sizes)):
            if ch < 1 or p < 1:
                raise ConfigError(f"stage {i}: channels and pool size must be >= 1")
            chain.append((f"conv2d_{i}", (t, h, w, ch)))
            if h < p or w < p:
                raise ConfigError(f"pool2d_{i}: pool {p}x{p} does not fit a {h}x{w} map")
            h, w, c = h // p, w // p, ch
            chain.append((f"pool2d_{i}", (t, h, w, c)))
        flat = h * w * c
        chain.append(("flatten", (t, flat)))
        if t < self.conv1d_kernel:
            raise ConfigError(f"conv1d kernel {self.conv1d_kernel} longer than T={t}")
        chain.append(("conv1d", (t, self.conv1d_channels)))
        if t < self.pool1d_size or self.pool1d_size < 1:
            raise ConfigError(f"pool1d size {self.pool1d_size} does not fit T={t}")
        steps = t // self.pool1d_size
        chain.append(("pool1d", (steps, self.conv1d_channels)))
        mult = 2 if self.bidirectional else 1
        for i, n in enumerate(self.hidden_sizes):
            chain.append((f"rnn_{i}", (steps, mult * n)))
        chain.append(("head_input", (mult * self.hidden_sizes[-1],)))
        chain.append(("head", (2,)))
        return tuple(chain)

    @property
    def head_input_dim(self) -> int:
        return (2 if self.bidirectional else 1) * self.hidden_sizes[-1]

    def to_dict(self) -> dict:
        return {
            "input_shape": list(self.input_shape),
            "conv_channels": list(self.conv_channels),
            "conv_kernel": self.conv_kernel,
            "pool_sizes": list(self.pool_sizes),
            "conv1d_channels": self.conv1d_channels,
            "conv1d_kernel": self.conv1d_kernel,
            "pool1d_size": self.pool1d_size,
            "rnn_kind": self.rnn_kind,
            "hidden_sizes": list(self.hidden_sizes),
            "bidirectional": self.bidirectional,
            "readout": self.readout,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "NetworkConfig":
        return cls(**{k: (tuple(v) if isinstance(v, list) else v) for k, v in d.items()})
