"""MSE loss, Adam, and the seeded training loop with checkpointing."""

from __future__ import annotations

import logging
from dataclasses import asdict, dataclass, field

import numpy as np

from . import container
from .errors import DimensionError, NonFiniteError
from .init import InitSpec
from .layers_cnn import NetworkConfig
from .model import Network, init_params
from .regularize import RegSpec

log = logging.getLogger(__name__)

CHECKPOINT_MAGIC = b"SZNT"
SEIZURE, BACKGROUND = 0, 1  # output/target column order


def one_hot(labels) -> np.ndarray:
    """Label 1 (seizure) -> ``(1, 0)``, label 0 (background) -> ``(0, 1)``."""
    labels = np.asarray(labels).astype(int)
    out = np.zeros((labels.size, 2))
    out[np.arange(labels.size), np.where(labels == 1, SEIZURE, BACKGROUND)] = 1.0
    return out


def mse_loss(pred: np.ndarray, target: np.ndarray):
    """Mean squared error over every element; returns ``(loss, dloss/dpred)``."""
    pred = np.asarray(pred, dtype=np.float64)
    target = np.asarray(target, dtype=np.float64)
    if pred.shape != target.shape:
        raise DimensionError(f"prediction shape {pred.shape} does not match target shape {target.shape}")
    diff = pred - target
    return float(np.mean(diff * diff)), 2.0 * diff / diff.size


@dataclass
class AdamState:
    lr: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    t: int = 0
    m: dict = field(default_factory=dict)
    v: dict = field(default_factory=dict)


def adam_step(params: dict, grads: dict, state: AdamState) -> None:
    """Bias-corrected Adam update, in place on ``params`` and ``state``.

    All gradients are checked before anything is touched, so a non-finite
    gradient leaves parameters and moments unchanged.
    """
    for name, g in grads.items():
        if not np.all(np.isfinite(g)):
            raise NonFiniteError(f"non-finite gradient for {name} at step {state.t + 1}")
    state.t += 1
    bc1 = 1.0 - state.beta1 ** state.t
    bc2 = 1.0 - state.beta2 ** state.t
    for name, g in grads.items():
        if name not in state.m:
            state.m[name] = np.zeros_like(params[name])
            state.v[name] = np.zeros_like(params[name])
        m = state.m[name]
        v = state.v[name]
        m *= state.beta1
        m += (1.0 - state.beta1) * g
        v *= state.beta2
        v += (1.0 - state.beta2) * g * g
        params[name] -= state.lr * (m / bc1) / (np.sqrt(v / bc2) + state.eps)


@dataclass(frozen=True)
class TrainConfig:
    epochs: int = 10
    batch_size: int = 8
    lr: float = 1e-3
    seed: int = 0
    init: str = "orthogonal"
    reg: RegSpec = RegSpec()
    rnn_kind: str = "lstm"

    def __post_init__(self):
        if self.batch_size < 1:
            raise ValueError(f"batch size must be >= 1, got {self.batch_size}")
        if self.lr <= 0:
            raise ValueError(f"learning rate must be positive, got {self.lr}")
        if self.epochs < 0:
            raise ValueError(f"epochs must be >= 0, got {self.epochs}")

    def to_dict(self) -> dict:
        d = asdict(self)
        d["reg"] = asdict(self.reg)
        return d


@dataclass
class LossRecord:
    step: int
    data_loss: float
    penalty: float

    @property
    def total(self) -> float:
        return self.data_loss + self.penalty


@dataclass
class TrainResult:
    network: Network
    log: list[LossRecord]
    accuracy: float


class TrainingDiverged(NonFiniteError):
    """Loss or gradient went non-finite; carries the last good parameters."""

    def __init__(self, message, last_good: dict, log: list):
        super().__init__(message)
        self.last_good = last_good
        self.log = log


def batch_loss(net: Network, x, targets, reg: RegSpec, mode: str = "train", rngs=None):
    """``(data_loss, penalty, grads, outputs)`` for one batch; grads include the penalty."""
    y, cache = net.forward(x, mode=mode, reg=reg, rngs=rngs)
    data_loss, dy = mse_loss(y, targets)
    grads = net.backward(cache, dy)
    pen, pen_grads = net.penalty(reg)
    for name, g in pen_grads.items():
        grads[name] = grads[name] + g
    return data_loss, pen, grads, y


def accuracy(outputs: np.ndarray, labels) -> float:
    pred = (outputs[:, SEIZURE] > outputs[:, BACKGROUND]).astype(int)
    return float(np.mean(pred == np.asarray(labels).astype(int)))


def step_rngs(seed: int, step: int):
    return lambda layer: np.random.default_rng(np.random.SeedSequence([seed, step, layer]))


def train(windows: np.ndarray, labels, config: TrainConfig, net_config: NetworkConfig | None = None) -> TrainResult:
    """Train from scratch on ``windows`` ``(N, T, H, W, C)`` with 0/1 ``labels`` (1 = seizure).

    Batches are drawn from a permutation seeded by ``config.seed``; the
    gradient is the batch mean. Raises :class:`TrainingDiverged` if the
    loss or a gradient becomes non-finite.
    """
    windows = np.asarray(windows, dtype=np.float64)
    labels = np.asarray(labels).astype(int)
    if windows.shape[0] == 0:
        raise ValueError("training set is empty")
    if labels.shape != (windows.shape[0],):
        raise DimensionError(f"{labels.shape} labels for {windows.shape[0]} windows")
    if net_config is None:
        net_config = NetworkConfig(input_shape=windows.shape[1:], rnn_kind=config.rnn_kind)
    net = Network(net_config, init_params(net_config, InitSpec(config.init, seed=config.seed)))
    targets = one_hot(labels)
    state = AdamState(lr=config.lr)
    shuffle_rng = np.random.default_rng(np.random.SeedSequence([config.seed, 0x5EED]))
    records: list[LossRecord] = []
    n = windows.shape[0]
    step = 0
    for epoch in range(config.epochs):
        order = shuffle_rng.permutation(n)
        for start in range(0, n, config.batch_size):
            idx = np.sort(order[start:start + config.batch_size])
            last_good = {k: v.copy() for k, v in net.params.items()}
            data_loss, pen, grads, _ = batch_loss(
                net, windows[idx], targets[idx], config.reg, "train", step_rngs(config.seed, step)
            )
            if not np.isfinite(data_loss + pen):
                raise TrainingDiverged(f"non-finite loss at step {step + 1} (epoch {epoch})", last_good, records)
            try:
                adam_step(net.params, grads, state)
            except NonFiniteError as exc:
                raise TrainingDiverged(str(exc), last_good, records) from exc
            step += 1
            records.append(LossRecord(step, data_loss, pen))
        log.debug("epoch %d loss %.6f", epoch, records[-1].total if records else float("nan"))
    acc = accuracy(net.predict(windows), labels)
    return TrainResult(net, records, acc)


def relative_decrease(records: list[LossRecord]) -> float:
    """Fractional drop in data loss from the first logged step to the last."""
    if len(records) < 2 or records[0].data_loss == 0:
        return 0.0
    return (records[0].data_loss - records[-1].data_loss) / records[0].data_loss


def loss_log_csv(records: list[LossRecord], header_config: dict | None = None) -> str:
    lines = []
    if header_config:
        lines += [f"# {line}" for line in container.canonical_config(header_config).splitlines()]
    lines.append("step,data_loss,penalty,total")
    lines += [f"{r.step},{float(r.data_loss)!r},{float(r.penalty)!r},{float(r.total)!r}" for r in records]
    return "\n".join(lines) + "\n"


def save_checkpoint(path, net: Network, extra_config: dict | None = None) -> None:
    config = {"network": net.config.to_dict()}
    if extra_config:
        config.update(extra_config)
    container.save(path, CHECKPOINT_MAGIC, config, net.params)


def checkpoint_bytes(net: Network, extra_config: dict | None = None) -> bytes:
    config = {"network": net.config.to_dict()}
    if extra_config:
        config.update(extra_config)
    return container.dumps(CHECKPOINT_MAGIC, config, net.params)


def load_checkpoint(path):
    """Returns ``(network, config)`` where ``config`` is the embedded config dict."""
    config, tensors = container.load(path, CHECKPOINT_MAGIC)
    net_cfg = NetworkConfig.from_dict(config["network"])
    return Network(net_cfg, tensors), config
