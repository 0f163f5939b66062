"""Weight initializers.

Fan-based schemes take the variance from ``fan_in`` (and ``fan_out``):

=================  ==========================  ====================
scheme             distribution                variance
=================  ==========================  ====================
glorot_uniform     U(-L, L], L=sqrt(6/(i+o))   2/(i+o)
glorot_normal      N(0, 2/(i+o))               2/(i+o)
he_uniform         U(-L, L], L=sqrt(6/i)       2/i
he_normal          N(0, 2/i)                   2/i
lecun_uniform      U(-L, L], L=sqrt(3/i)       1/i
lecun_normal       N(0, 1/i)                   1/i
variance_scaling   N(0, scale/i)               scale/i
=================  ==========================  ====================

``random_uniform`` draws from U(-0.05, 0.05], ``truncated_normal`` from
N(0, 0.05^2) redrawing anything beyond two standard deviations, and
``orthogonal`` returns a matrix with orthonormal rows or columns.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ConfigError

SCHEMES = (
    "orthogonal",
    "lecun_uniform",
    "glorot_uniform",
    "glorot_normal",
    "variance_scaling",
    "lecun_normal",
    "he_normal",
    "random_uniform",
    "truncated_normal",
    "he_uniform",
    "zeros",
    "ones",
)


@dataclass(frozen=True)
class InitSpec:
    scheme: str = "orthogonal"
    seed: int = 0
    scale: float = 1.0  # variance_scaling scale, orthogonal gain
    limit: float = 0.05  # random_uniform half-width
    stddev: float = 0.05  # truncated_normal sigma

    def __post_init__(self):
        if self.scheme not in SCHEMES:
            raise ConfigError(f"unknown init scheme {self.scheme!r}; expected one of {', '.join(SCHEMES)}")


def make_rng(seed: int, index: int = 0) -> np.random.Generator:
    """Private stream for one tensor, derived from the run seed and a layer index."""
    return np.random.default_rng(np.random.SeedSequence([int(seed) & 0xFFFFFFFFFFFFFFFF, int(index)]))


def nominal_variance(scheme: str, fan_in: int, fan_out: int, scale: float = 1.0) -> float:
    if scheme.startswith("glorot"):
        return 2.0 / (fan_in + fan_out)
    if scheme.startswith("he"):
        return 2.0 / fan_in
    if scheme.startswith("lecun"):
        return 1.0 / fan_in
    if scheme == "variance_scaling":
        return scale / fan_in
    raise ValueError(f"{scheme!r} is not a fan-based scheme")


def _uniform(rng, limit, shape):
    # numpy samples [-L, L); negating gives (-L, L].
    return -rng.uniform(-limit, limit, size=shape)


def _truncated_normal(rng, stddev, shape):
    out = rng.normal(0.0, stddev, size=shape)
    bad = np.abs(out) > 2.0 * stddev
    while bad.any():
        out[bad] = rng.normal(0.0, stddev, size=int(bad.sum()))
        bad = np.abs(out) > 2.0 * stddev
    return out


def orthogonal(shape, rng: np.random.Generator, gain: float = 1.0) -> np.ndarray:
    """Orthonormal matrix reshaped to ``shape``.

    The trailing axis is the output axis; leading axes are flattened into
    rows. The result has orthonormal columns when rows >= cols and
    orthonormal rows otherwise.
    """
    shape = tuple(shape)
    if len(shape) < 2:
        rows, cols = 1, int(np.prod(shape))
    else:
        rows, cols = int(np.prod(shape[:-1])), shape[-1]
    a = rng.normal(0.0, 1.0, size=(max(rows, cols), min(rows, cols)))
    q, r = np.linalg.qr(a)
    signs = np.sign(np.diag(r))
    signs[signs == 0] = 1.0
    q = q * signs
    if rows < cols:
        q = q.T
    return gain * q.reshape(shape)


def init(shape, fan_in: int, fan_out: int, spec: InitSpec, index: int = 0) -> np.ndarray:
    """Draw a tensor of ``shape`` according to ``spec``.

    ``index`` selects the private random stream, so different layers
    initialized with the same spec get different values.
    """
    if fan_in < 1 or fan_out < 1:
        raise ConfigError(f"fans must be >= 1, got fan_in={fan_in}, fan_out={fan_out}")
    shape = tuple(int(s) for s in shape)
    scheme = spec.scheme
    if scheme == "zeros":
        return np.zeros(shape)
    if scheme == "ones":
        return np.ones(shape)
    rng = make_rng(spec.seed, index)
    if scheme == "orthogonal":
        return orthogonal(shape, rng, spec.scale)
    if scheme == "random_uniform":
        return _uniform(rng, spec.limit, shape)
    if scheme == "truncated_normal":
        return _truncated_normal(rng, spec.stddev, shape)
    var = nominal_variance(scheme, fan_in, fan_out, spec.scale)
    if scheme.endswith("uniform"):
        return _uniform(rng, np.sqrt(3.0 * var), shape)
    return rng.normal(0.0, np.sqrt(var), size=shape)
