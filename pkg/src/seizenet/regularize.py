"""Weight penalties, dropout and additive Gaussian noise."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ConfigError

KINDS = ("none", "l1", "l2", "l1l2", "dropout", "gaussian_noise")
_ALIASES = {"gaussian": "gaussian_noise"}


@dataclass(frozen=True)
class RegSpec:
    """Which regularizer to apply and how strongly.

    ``applied_layers`` counts 2D conv stages from the input; penalties act
    on those stages' kernels, dropout/noise on their pooled activations.
    """

    kind: str = "none"
    l1: float = 0.01
    l2: float = 0.01
    p_drop: float = 0.5
    sigma: float = 0.1
    applied_layers: int = 2

    def __post_init__(self):
        object.__setattr__(self, "kind", _ALIASES.get(self.kind, self.kind))
        if self.kind not in KINDS:
            raise ConfigError(f"unknown regularizer {self.kind!r}; expected one of {', '.join(KINDS)}")
        if not 0.0 <= self.p_drop < 1.0:
            raise ConfigError(f"dropout probability must be in [0, 1), got {self.p_drop}")
        if self.l1 < 0 or self.l2 < 0 or self.sigma < 0:
            raise ConfigError("penalty weights and noise sigma must be non-negative")

    @property
    def is_penalty(self) -> bool:
        return self.kind in ("l1", "l2", "l1l2")

    @classmethod
    def from_strength(cls, kind: str, strength: float | None = None, **kw) -> "RegSpec":
        """Build a spec where ``strength`` sets the knob that ``kind`` uses."""
        kind = _ALIASES.get(kind, kind)
        if strength is not None:
            if kind in ("l1", "l2", "l1l2"):
                kw.setdefault("l1", strength)
                kw.setdefault("l2", strength)
            elif kind == "dropout":
                kw.setdefault("p_drop", strength)
            elif kind == "gaussian_noise":
                kw.setdefault("sigma", strength)
        return cls(kind=kind, **kw)


def penalty(params: dict, spec: RegSpec):
    """Penalty term and its gradient for each array in ``params``.

    l1 uses ``l1 * sum|w|`` with subgradient ``sign(w)`` (0 at 0), l2 uses
    ``l2 * sum w^2``, l1l2 adds both. Other kinds contribute nothing.
    """
    total = 0.0
    grads = {}
    use_l1 = spec.kind in ("l1", "l1l2")
    use_l2 = spec.kind in ("l2", "l1l2")
    for name, w in params.items():
        g = np.zeros_like(w)
        if use_l1:
            total += spec.l1 * float(np.abs(w).sum())
            g += spec.l1 * np.sign(w)
        if use_l2:
            total += spec.l2 * float((w * w).sum())
            g += 2.0 * spec.l2 * w
        grads[name] = g
    return total, grads


def dropout(x: np.ndarray, p_drop: float, mode: str, rng: np.random.Generator | None = None):
    """Inverted dropout. Returns ``(y, mask)``; eval mode is the identity."""
    if not 0.0 <= p_drop < 1.0:
        raise ConfigError(f"dropout probability must be in [0, 1), got {p_drop}")
    if mode == "eval" or p_drop == 0.0:
        return x, np.ones_like(x)
    mask = (rng.random(x.shape) >= p_drop).astype(x.dtype)
    return x * mask / (1.0 - p_drop), mask


def dropout_backward(dy: np.ndarray, mask: np.ndarray, p_drop: float) -> np.ndarray:
    return dy * mask / (1.0 - p_drop)


def gaussian_noise(x: np.ndarray, sigma: float, mode: str, rng: np.random.Generator | None = None) -> np.ndarray:
    """Add zero-mean noise of std ``sigma`` in train mode; gradient passes straight through."""
    if sigma < 0:
        raise ConfigError(f"noise sigma must be non-negative, got {sigma}")
    if mode == "eval" or sigma == 0.0:
        return x
    return x + rng.normal(0.0, sigma, size=x.shape)
