"""The full CNN + bidirectional RNN + sigmoid-head network.

Parameters live in one flat ``dict`` keyed by dotted names, e.g.
``conv2d_0.kernel`` or ``rnn_1.bwd.W_f``; insertion order is canonical and
is what checkpoints, the optimizer and initialization indices follow.
"""

from __future__ import annotations

from typing import Callable

import numpy as np

from . import layers_cnn as L
from . import recurrent as R
from .errors import DimensionError
from .init import InitSpec, init
from .layers_cnn import NetworkConfig
from .regularize import RegSpec, dropout, dropout_backward, gaussian_noise, penalty
from .tensor_core import elu, elu_grad

RngFactory = Callable[[int], np.random.Generator]


def param_layout(cfg: NetworkConfig) -> list[tuple[str, tuple, int, int]]:
    """``(name, shape, fan_in, fan_out)`` for every parameter, in canonical order."""
    out = []
    t, h, w, c = cfg.input_shape
    k = cfg.conv_kernel
    for i, (ch, p) in enumerate(zip(cfg.conv_channels, cfg.pool_sizes)):
        out.append((f"conv2d_{i}.kernel", (k, k, c, ch), k * k * c, k * k * ch))
        out.append((f"conv2d_{i}.bias", (ch,), k * k * c, k * k * ch))
        h, w, c = h // p, w // p, ch
    flat = h * w * c
    k1 = cfg.conv1d_kernel
    out.append(("conv1d.kernel", (k1, flat, cfg.conv1d_channels), k1 * flat, k1 * cfg.conv1d_channels))
    out.append(("conv1d.bias", (cfg.conv1d_channels,), k1 * flat, k1 * cfg.conv1d_channels))
    m = cfg.conv1d_channels
    directions = ("fwd", "bwd") if cfg.bidirectional else ("fwd",)
    for li, n in enumerate(cfg.hidden_sizes):
        for d in directions:
            for pname, shape in R.param_shapes(cfg.rnn_kind, n, m).items():
                fan_in = m if pname.startswith("U_") else n
                out.append((f"rnn_{li}.{d}.{pname}", shape, fan_in, n))
        m = len(directions) * n
    out.append(("head.weight", (cfg.head_input_dim, 2), cfg.head_input_dim, 2))
    out.append(("head.bias", (2,), cfg.head_input_dim, 2))
    return out


def is_weight(name: str) -> bool:
    """Kernels and weight matrices; biases and peepholes are excluded."""
    leaf = name.rsplit(".", 1)[-1]
    return leaf in ("kernel", "weight") or leaf.startswith(("U_", "W_"))


def init_params(cfg: NetworkConfig, spec: InitSpec) -> dict[str, np.ndarray]:
    """Initialize weights with ``spec``; biases and peepholes start at zero."""
    params = {}
    for index, (name, shape, fan_in, fan_out) in enumerate(param_layout(cfg)):
        if is_weight(name):
            params[name] = init(shape, fan_in, fan_out, spec, index=index)
        else:
            params[name] = np.zeros(shape)
    return params


def count_params(params: dict) -> int:
    return int(sum(v.size for v in params.values()))


class Network:
    def __init__(self, config: NetworkConfig, params: dict[str, np.ndarray]):
        expected = {name: shape for name, shape, _, _ in param_layout(config)}
        got = {name: tuple(v.shape) for name, v in params.items()}
        if expected != got:
            missing = sorted(set(expected) - set(got))
            extra = sorted(set(got) - set(expected))
            wrong = sorted(k for k in set(expected) & set(got) if expected[k] != got[k])
            raise DimensionError(f"parameters do not fit config: missing={missing} extra={extra} wrong_shape={wrong}")
        self.config = config
        self.params = {name: params[name] for name in expected}

    @classmethod
    def create(cls, config: NetworkConfig, spec: InitSpec = InitSpec()) -> "Network":
        return cls(config, init_params(config, spec))

    def _rnn_layers(self, params=None):
        params = self.params if params is None else params
        cfg = self.config
        directions = ("fwd", "bwd") if cfg.bidirectional else ("fwd",)
        layers = []
        for li in range(len(cfg.hidden_sizes)):
            layer = {}
            for d in directions:
                prefix = f"rnn_{li}.{d}."
                layer[d] = {k[len(prefix):]: v for k, v in params.items() if k.startswith(prefix)}
            layers.append(layer)
        return layers

    def forward(self, x: np.ndarray, mode: str = "eval", reg: RegSpec = RegSpec(), rngs: RngFactory | None = None):
        """Outputs ``(B, 2)`` for windows ``(B, T, H, W, C)``; a single window gives ``(2,)``.

        ``rngs(layer_index)`` supplies the random stream for dropout/noise
        at each regularized stage in train mode.
        """
        cfg = self.config
        p = self.params
        x = np.asarray(x, dtype=np.float64)
        squeeze = x.ndim == 4
        if squeeze:
            x = x[None]
        if x.shape[1:] != cfg.input_shape:
            raise DimensionError(
                f"network expects windows of shape {cfg.input_shape} (chain {cfg.shape_chain()[0][1]} -> ... "
                f"-> {cfg.shape_chain()[-1][1]}), found {x.shape[1:]}"
            )
        stochastic = mode == "train" and reg.kind in ("dropout", "gaussian_noise")
        if stochastic and rngs is None:
            raise ValueError("train-mode dropout/noise needs a random stream factory")
        caches = {"squeeze": squeeze, "stages": []}
        h = x
        for i, size in enumerate(cfg.pool_sizes):
            a, conv_cache = L.conv2d_forward(h, p[f"conv2d_{i}.kernel"], p[f"conv2d_{i}.bias"])
            h = elu(a)
            h, pool_cache = L.maxpool2d(h, size)
            mask = None
            if stochastic and i < reg.applied_layers:
                if reg.kind == "dropout":
                    h, mask = dropout(h, reg.p_drop, mode, rngs(i))
                else:
                    h = gaussian_noise(h, reg.sigma, mode, rngs(i))
            caches["stages"].append((conv_cache, a, pool_cache, mask))
        frame_shape = h.shape[-3:]
        h = L.flatten_time(h)
        a1, conv1_cache = L.conv1d_forward(h, p["conv1d.kernel"], p["conv1d.bias"])
        h, pool1_cache = L.maxpool1d(elu(a1), cfg.pool1d_size)
        caches["cnn1d"] = (frame_shape, conv1_cache, a1, pool1_cache)
        layers = self._rnn_layers()
        seq, rnn_caches = R.bidirectional_forward(h, layers, cfg.bidirectional)
        vec = R.readout(seq, cfg.hidden_sizes[-1], cfg.bidirectional, cfg.readout)
        y, head_cache = L.dense_sigmoid_head(vec, p["head.weight"], p["head.bias"])
        caches["rnn"] = (seq.shape, rnn_caches)
        caches["head"] = head_cache
        caches["reg"] = reg if stochastic else None
        return (y[0] if squeeze else y), caches

    def predict(self, x: np.ndarray, batch_size: int = 16) -> np.ndarray:
        x = np.asarray(x, dtype=np.float64)
        if x.ndim == 4:
            return self.forward(x)[0]
        outs = [self.forward(x[i:i + batch_size])[0] for i in range(0, x.shape[0], batch_size)]
        return np.concatenate(outs, axis=0)

    def backward(self, caches, dy: np.ndarray) -> dict[str, np.ndarray]:
        """Gradients for every parameter given ``dL/dy``."""
        cfg = self.config
        p = self.params
        dy = np.asarray(dy, dtype=np.float64)
        if caches["squeeze"]:
            dy = dy[None]
        grads = {}
        dvec, grads["head.weight"], grads["head.bias"] = L.dense_sigmoid_head_backward(dy, caches["head"])
        seq_shape, rnn_caches = caches["rnn"]
        dseq = R.readout_backward(dvec, seq_shape, cfg.hidden_sizes[-1], cfg.bidirectional, cfg.readout)
        layers = self._rnn_layers()
        layer_grads, dh = R.bidirectional_backward(dseq, rnn_caches, layers, cfg.bidirectional)
        for li, lg in enumerate(layer_grads):
            for d, g in lg.items():
                for k, v in g.items():
                    grads[f"rnn_{li}.{d}.{k}"] = v
        frame_shape, conv1_cache, a1, pool1_cache = caches["cnn1d"]
        dh = L.maxpool1d_backward(dh, pool1_cache) * elu_grad(a1)
        dh, grads["conv1d.kernel"], grads["conv1d.bias"] = L.conv1d_backward(dh, conv1_cache)
        dh = L.unflatten_time(dh, frame_shape)
        reg = caches["reg"]
        for i in range(len(cfg.pool_sizes) - 1, -1, -1):
            conv_cache, a, pool_cache, mask = caches["stages"][i]
            if mask is not None:
                dh = dropout_backward(dh, mask, reg.p_drop)
            dh = L.maxpool2d_backward(dh, pool_cache) * elu_grad(a)
            dh, grads[f"conv2d_{i}.kernel"], grads[f"conv2d_{i}.bias"] = L.conv2d_backward(dh, conv_cache)
        return {name: grads[name] for name in p}

    def penalty_params(self, reg: RegSpec) -> dict[str, np.ndarray]:
        return {
            f"conv2d_{i}.kernel": self.params[f"conv2d_{i}.kernel"]
            for i in range(min(reg.applied_layers, len(self.config.conv_channels)))
        }

    def penalty(self, reg: RegSpec):
        if not reg.is_penalty:
            return 0.0, {}
        return penalty(self.penalty_params(reg), reg)
