"""Gated recurrent cells (peephole LSTM and GRU), sequence scans and BPTT.

Parameters are dicts of arrays. Input weights ``U_*`` are ``(n, m)``,
recurrent weights ``W_*`` are ``(n, n)``, biases ``b_*`` and LSTM peepholes
``p_*`` are ``(n,)`` vectors. Inputs are row vectors with a leading batch
axis, so a pre-activation reads ``x @ U.T + s @ W.T + b``.

LSTM::

    i = sigmoid(U_i x + W_i s' + p_i * c' + b_i)
    f = sigmoid(U_f x + W_f s' + p_f * c' + b_f)
    c = f * c' + i * tanh(U_c x + W_c s' + b_c)
    o = sigmoid(U_o x + W_o s' + p_o * c + b_o)
    s = o * tanh(c)

GRU::

    r = sigmoid(U_r x + W_r s' + b_r)
    z = sigmoid(U_z x + W_z s' + b_z)
    h = tanh(U_s x + r * (W_s s') + b_s)
    s = z * s' + (1 - z) * h
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import DimensionError
from .tensor_core import sigmoid

LSTM_GATES = ("i", "f", "c", "o")
LSTM_PEEPHOLES = ("i", "f", "o")
GRU_GATES = ("r", "z", "s")


def param_shapes(kind: str, n: int, m: int) -> dict[str, tuple]:
    """Names and shapes of one cell's parameters, in canonical order."""
    if kind == "lstm":
        gates, peeps = LSTM_GATES, LSTM_PEEPHOLES
    elif kind == "gru":
        gates, peeps = GRU_GATES, ()
    else:
        raise ValueError(f"unknown cell kind {kind!r}")
    shapes = {}
    for g in gates:
        shapes[f"U_{g}"] = (n, m)
    for g in gates:
        shapes[f"W_{g}"] = (n, n)
    for g in peeps:
        shapes[f"p_{g}"] = (n,)
    for g in gates:
        shapes[f"b_{g}"] = (n,)
    return shapes


def param_count(kind: str, n: int, m: int) -> int:
    """Closed form: LSTM ``4(nm + n^2 + n) + 3n``, GRU ``3(nm + n^2 + n)``."""
    if kind == "lstm":
        return 4 * (n * m + n * n + n) + 3 * n
    if kind == "gru":
        return 3 * (n * m + n * n + n)
    raise ValueError(f"unknown cell kind {kind!r}")


def zero_params(kind: str, n: int, m: int) -> dict[str, np.ndarray]:
    return {name: np.zeros(shape) for name, shape in param_shapes(kind, n, m).items()}


def hidden_size(params) -> int:
    return params["b_" + ("i" if "p_i" in params else "r")].shape[0]


def cell_kind(params) -> str:
    return "lstm" if "p_i" in params else "gru"


def _affine(x, s, params, g):
    return x @ params[f"U_{g}"].T + s @ params[f"W_{g}"].T + params[f"b_{g}"]


# ------------------------------------------------------------------- steps

def lstm_step(x, s_prev, c_prev, params):
    """One peephole-LSTM step. Returns ``(s, c, cache)``."""
    i = sigmoid(_affine(x, s_prev, params, "i") + params["p_i"] * c_prev)
    f = sigmoid(_affine(x, s_prev, params, "f") + params["p_f"] * c_prev)
    g = np.tanh(_affine(x, s_prev, params, "c"))
    c = f * c_prev + i * g
    o = sigmoid(_affine(x, s_prev, params, "o") + params["p_o"] * c)
    tc = np.tanh(c)
    s = o * tc
    cache = {"x": x, "s_prev": s_prev, "c_prev": c_prev, "i": i, "f": f, "g": g, "o": o, "c": c, "tc": tc}
    return s, c, cache


def lstm_step_backward(ds, dc_next, cache, params, grads):
    """Accumulate parameter grads into ``grads``; return ``(dx, ds_prev, dc_prev)``.

    ``ds`` is the total gradient reaching ``s_t``, ``dc_next`` the gradient
    reaching ``c_t`` from step ``t + 1``.
    """
    i, f, g, o, c, tc = (cache[k] for k in ("i", "f", "g", "o", "c", "tc"))
    x, s_prev, c_prev = cache["x"], cache["s_prev"], cache["c_prev"]
    da_o = ds * tc * o * (1.0 - o)
    dc = dc_next + ds * o * (1.0 - tc * tc) + da_o * params["p_o"]
    da_i = dc * g * i * (1.0 - i)
    da_f = dc * c_prev * f * (1.0 - f)
    da_c = dc * i * (1.0 - g * g)
    dc_prev = dc * f + da_i * params["p_i"] + da_f * params["p_f"]
    dx = np.zeros_like(x)
    ds_prev = np.zeros_like(s_prev)
    for gate, da in zip(LSTM_GATES, (da_i, da_f, da_c, da_o)):
        grads[f"U_{gate}"] += da.T @ x
        grads[f"W_{gate}"] += da.T @ s_prev
        grads[f"b_{gate}"] += da.sum(axis=0)
        dx += da @ params[f"U_{gate}"]
        ds_prev += da @ params[f"W_{gate}"]
    grads["p_i"] += (da_i * c_prev).sum(axis=0)
    grads["p_f"] += (da_f * c_prev).sum(axis=0)
    grads["p_o"] += (da_o * c).sum(axis=0)
    return dx, ds_prev, dc_prev


def gru_step(x, s_prev, params):
    """One GRU step. Returns ``(s, cache)``."""
    r = sigmoid(_affine(x, s_prev, params, "r"))
    z = sigmoid(_affine(x, s_prev, params, "z"))
    hw = s_prev @ params["W_s"].T
    h = np.tanh(x @ params["U_s"].T + r * hw + params["b_s"])
    s = z * s_prev + (1.0 - z) * h
    cache = {"x": x, "s_prev": s_prev, "r": r, "z": z, "hw": hw, "h": h}
    return s, cache


def gru_step_backward(ds, cache, params, grads):
    """Accumulate parameter grads into ``grads``; return ``(dx, ds_prev)``."""
    x, s_prev, r, z, hw, h = (cache[k] for k in ("x", "s_prev", "r", "z", "hw", "h"))
    da_z = ds * (s_prev - h) * z * (1.0 - z)
    da_s = ds * (1.0 - z) * (1.0 - h * h)
    da_r = da_s * hw * r * (1.0 - r)
    dhw = da_s * r
    grads["U_r"] += da_r.T @ x
    grads["W_r"] += da_r.T @ s_prev
    grads["b_r"] += da_r.sum(axis=0)
    grads["U_z"] += da_z.T @ x
    grads["W_z"] += da_z.T @ s_prev
    grads["b_z"] += da_z.sum(axis=0)
    grads["U_s"] += da_s.T @ x
    grads["W_s"] += dhw.T @ s_prev
    grads["b_s"] += da_s.sum(axis=0)
    dx = da_r @ params["U_r"] + da_z @ params["U_z"] + da_s @ params["U_s"]
    ds_prev = ds * z + da_r @ params["W_r"] + da_z @ params["W_z"] + dhw @ params["W_s"]
    return dx, ds_prev


# --------------------------------------------------------------- sequences

@dataclass
class SequenceCache:
    kind: str
    direction: str
    steps: list
    input_shape: tuple
    squeeze: bool


def _check_input(xs, params):
    m = params["U_" + ("i" if cell_kind(params) == "lstm" else "r")].shape[1]
    if xs.shape[-1] != m:
        raise DimensionError(f"cell expects input dim {m}, got sequence shape {xs.shape}")


def run_sequence(xs: np.ndarray, params, direction: str = "fwd"):
    """Scan a cell over ``xs`` of shape ``(T, m)`` or ``(B, T, m)`` from zero state.

    ``direction="bwd"`` reverses the input, scans, and reverses the output,
    so row ``t`` of the result always lines up with input row ``t``.
    Returns ``(outputs, cache)`` with outputs shaped like ``xs`` but with
    ``n`` features.
    """
    if direction not in ("fwd", "bwd"):
        raise ValueError(f"direction must be 'fwd' or 'bwd', got {direction!r}")
    xs = np.asarray(xs, dtype=np.float64)
    squeeze = xs.ndim == 2
    if squeeze:
        xs = xs[None]
    if xs.ndim != 3:
        raise DimensionError(f"sequence must be (T, m) or (B, T, m), got shape {xs.shape}")
    if xs.shape[1] == 0:
        raise DimensionError("cannot run an empty sequence")
    _check_input(xs, params)
    kind = cell_kind(params)
    n = hidden_size(params)
    b, t_len, _ = xs.shape
    order = range(t_len) if direction == "fwd" else range(t_len - 1, -1, -1)
    s = np.zeros((b, n))
    c = np.zeros((b, n))
    out = np.empty((b, t_len, n))
    steps = []
    for t in order:
        if kind == "lstm":
            s, c, cache = lstm_step(xs[:, t], s, c, params)
        else:
            s, cache = gru_step(xs[:, t], s, params)
        out[:, t] = s
        steps.append(cache)
    seq = SequenceCache(kind, direction, steps, xs.shape, squeeze)
    return (out[0] if squeeze else out), seq


def bptt(cache: SequenceCache, d_out: np.ndarray, params):
    """Gradients of a scanned sequence given the gradient on every output row.

    Returns ``(grads, dxs)`` where ``grads`` mirrors ``params`` and ``dxs``
    has the input's shape.
    """
    d_out = np.asarray(d_out, dtype=np.float64)
    if cache.squeeze:
        d_out = d_out[None]
    b, t_len, _ = cache.input_shape
    n = hidden_size(params)
    if d_out.shape != (b, t_len, n) or len(cache.steps) != t_len or cell_kind(params) != cache.kind:
        raise DimensionError(f"gradient of shape {d_out.shape} does not match the cached {cache.kind} pass")
    grads = {k: np.zeros_like(v) for k, v in params.items()}
    dxs = np.zeros(cache.input_shape)
    order = list(range(t_len) if cache.direction == "fwd" else range(t_len - 1, -1, -1))
    ds_next = np.zeros((b, n))
    dc_next = np.zeros((b, n))
    for t, step in zip(reversed(order), reversed(cache.steps)):
        ds = d_out[:, t] + ds_next
        if cache.kind == "lstm":
            dx, ds_next, dc_next = lstm_step_backward(ds, dc_next, step, params, grads)
        else:
            dx, ds_next = gru_step_backward(ds, step, params, grads)
        dxs[:, t] = dx
    return grads, (dxs[0] if cache.squeeze else dxs)


# ----------------------------------------------------------- bidirectional

def bidirectional_forward(xs: np.ndarray, layers: list, bidirectional: bool = True):
    """Run stacked (bi)directional layers over ``(B, T, m)``.

    ``layers`` is a list of ``{"fwd": params, "bwd": params}`` dicts (``bwd``
    omitted when unidirectional). Each layer concatenates its directions per
    step before feeding the next. Returns ``(sequence_out, caches)``.
    """
    h = xs
    caches = []
    for layer in layers:
        out_f, cache_f = run_sequence(h, layer["fwd"], "fwd")
        if bidirectional:
            out_b, cache_b = run_sequence(h, layer["bwd"], "bwd")
            h = np.concatenate([out_f, out_b], axis=-1)
        else:
            cache_b = None
            h = out_f
        caches.append((cache_f, cache_b))
    return h, caches


def bidirectional_backward(d_seq: np.ndarray, caches, layers: list, bidirectional: bool = True):
    """Backward of :func:`bidirectional_forward`; returns ``(layer_grads, dxs)``."""
    layer_grads = [None] * len(layers)
    d = d_seq
    for idx in range(len(layers) - 1, -1, -1):
        cache_f, cache_b = caches[idx]
        layer = layers[idx]
        if bidirectional:
            n = hidden_size(layer["fwd"])
            g_f, dx_f = bptt(cache_f, d[..., :n], layer["fwd"])
            g_b, dx_b = bptt(cache_b, d[..., n:], layer["bwd"])
            layer_grads[idx] = {"fwd": g_f, "bwd": g_b}
            d = dx_f + dx_b
        else:
            g_f, d = bptt(cache_f, d, layer["fwd"])
            layer_grads[idx] = {"fwd": g_f}
    return layer_grads, d


def readout(seq: np.ndarray, n_last: int, bidirectional: bool = True, mode: str = "final") -> np.ndarray:
    """Vector fed to the head from the last layer's ``(B, T, k)`` outputs.

    ``final`` takes the forward direction at the last step and the backward
    direction at the first step (where its scan ends).
    """
    if mode == "mean":
        return seq.mean(axis=-2)
    if not bidirectional:
        return seq[..., -1, :]
    return np.concatenate([seq[..., -1, :n_last], seq[..., 0, n_last:]], axis=-1)


def readout_backward(d_vec: np.ndarray, seq_shape, n_last: int, bidirectional: bool = True, mode: str = "final"):
    d = np.zeros(seq_shape)
    if mode == "mean":
        d[...] = d_vec[..., None, :] / seq_shape[-2]
    elif not bidirectional:
        d[..., -1, :] = d_vec
    else:
        d[..., -1, :n_last] = d_vec[..., :n_last]
        d[..., 0, n_last:] = d_vec[..., n_last:]
    return d


def bidirectional_stack(xs: np.ndarray, layers: list, bidirectional: bool = True, mode: str = "final"):
    """Stacked layers plus readout: ``(T, m)`` or ``(B, T, m)`` to the head input vector."""
    xs = np.asarray(xs, dtype=np.float64)
    squeeze = xs.ndim == 2
    seq, _ = bidirectional_forward(xs[None] if squeeze else xs, layers, bidirectional)
    n_last = hidden_size(layers[-1]["fwd"])
    vec = readout(seq, n_last, bidirectional, mode)
    return vec[0] if squeeze else vec
