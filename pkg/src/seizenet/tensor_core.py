"""Dense arrays and the elementwise/matrix primitives the layers are built on.

Tensors are plain :class:`numpy.ndarray` objects (row-major, float64 by
default). The helpers here add the shape checks and the explicit derivative
functions used by the hand-written backward passes.
"""

from __future__ import annotations

from typing import Callable

import numpy as np

from .errors import DimensionError

Tensor = np.ndarray

ELU_ALPHA = 1.0


def as_tensor(values, dtype=np.float64) -> Tensor:
    """Convert ``values`` to a contiguous array with every extent >= 1."""
    arr = np.ascontiguousarray(values, dtype=dtype)
    if arr.ndim == 0:
        arr = arr.reshape(1)
    if any(extent < 1 for extent in arr.shape):
        raise DimensionError(f"tensor extents must be >= 1, got shape {arr.shape}")
    return arr


def matmul(a: Tensor, b: Tensor) -> Tensor:
    if a.ndim != 2 or b.ndim != 2 or a.shape[1] != b.shape[0]:
        raise DimensionError(f"cannot multiply shapes {a.shape} and {b.shape}")
    return a @ b


_EW_OPS: dict[str, Callable[[Tensor, Tensor], Tensor]] = {
    "add": np.add,
    "sub": np.subtract,
    "mul": np.multiply,
}


def ew(op: str, a: Tensor, b: Tensor) -> Tensor:
    """Elementwise ``add``, ``sub`` or ``mul`` of equally shaped tensors."""
    try:
        fn = _EW_OPS[op]
    except KeyError:
        raise ValueError(f"unknown elementwise op {op!r}") from None
    a = np.asarray(a)
    b = np.asarray(b)
    if a.shape != b.shape:
        raise DimensionError(f"elementwise {op} needs equal shapes, got {a.shape} and {b.shape}")
    return fn(a, b)


def sigmoid(x: Tensor) -> Tensor:
    # Split by sign so exp never overflows.
    x = np.asarray(x, dtype=np.float64)
    out = np.empty_like(x)
    pos = x >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
    ex = np.exp(x[~pos])
    out[~pos] = ex / (1.0 + ex)
    return out


def tanh(x: Tensor) -> Tensor:
    return np.tanh(x)


def elu(x: Tensor, alpha: float = ELU_ALPHA) -> Tensor:
    x = np.asarray(x, dtype=np.float64)
    return np.where(x > 0, x, alpha * np.expm1(np.minimum(x, 0.0)))


def sigmoid_grad(x: Tensor) -> Tensor:
    s = sigmoid(x)
    return s * (1.0 - s)


def tanh_grad(x: Tensor) -> Tensor:
    t = np.tanh(x)
    return 1.0 - t * t


def elu_grad(x: Tensor, alpha: float = ELU_ALPHA) -> Tensor:
    x = np.asarray(x, dtype=np.float64)
    return np.where(x > 0, 1.0, alpha * np.exp(np.minimum(x, 0.0)))


_ACTIVATIONS = {
    "sigmoid": (sigmoid, sigmoid_grad),
    "tanh": (tanh, tanh_grad),
    "elu": (elu, elu_grad),
}


def activation(kind: str, x: Tensor) -> Tensor:
    return _lookup(kind)[0](x)


def activation_grad(kind: str, x: Tensor) -> Tensor:
    """Derivative of activation ``kind`` evaluated at the pre-activation ``x``."""
    return _lookup(kind)[1](x)


def _lookup(kind: str):
    try:
        return _ACTIVATIONS[kind]
    except KeyError:
        raise ValueError(f"unknown activation {kind!r}; expected one of {sorted(_ACTIVATIONS)}") from None
