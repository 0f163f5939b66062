"""LFCC feature windows for multichannel EEG.

Every channel is cut into overlapping Hamming-tapered frames (0.2 s long,
0.1 s apart), each frame is reduced to linear-frequency cepstra plus
energy terms, deltas are appended, and consecutive frames are grouped into
21 s windows of shape ``(T, H, W, 1) = (210, 22, 26, 1)``.

File formats
------------
CSV: header ``time,<ch1>,...,<chH>``, then one row per sample. The sample
rate is recovered from the spacing of the ``time`` column.

Binary (little-endian)::

    magic       4 bytes  b"EEGR"
    sample_rate u32      Hz
    n_channels  u32
    n_samples   u64
    samples     f32 * n_channels * n_samples, channel-major
"""

from __future__ import annotations

import csv
import io
import struct
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from scipy.fft import dct

from .errors import FormatError, MontageError, SignalError

LOG_FLOOR = 1e-10
DELTA_SPAN = 2  # regression half-width; the full span is 2 * DELTA_SPAN + 1 frames

# Which base features are kept at each derivative order. Changing this table
# changes the feature width W; the network reads W from the window shape.
BASE_FEATURES = tuple(f"c{i}" for i in range(1, 8)) + ("energy", "diff_energy")
FEATURE_LAYOUT = {
    0: BASE_FEATURES,
    1: BASE_FEATURES,
    2: BASE_FEATURES[:-1],
}


@dataclass(frozen=True)
class FeatureConfig:
    frame_len_s: float = 0.2
    frame_step_s: float = 0.1
    window_s: float = 21.0
    window_stride_s: float = 1.0
    n_filters: int = 24
    n_ceps: int = 8  # c0..c7; c0 is dropped from the feature vector
    diff_energy_span: int = 9
    n_channels: int = 22

    @property
    def frames_per_window(self) -> int:
        return int(round(self.window_s / self.frame_step_s))

    @property
    def feature_width(self) -> int:
        return sum(len(names) for names in FEATURE_LAYOUT.values())


@dataclass
class SignalRecord:
    """Equal-length sample sequences for each channel, shape ``(H, N)``."""

    sample_rate: float
    channels: list[str]
    samples: np.ndarray

    def __post_init__(self):
        self.samples = np.asarray(self.samples, dtype=np.float64)
        if self.sample_rate <= 0:
            raise SignalError(f"sample rate must be positive, got {self.sample_rate}")
        if self.samples.ndim != 2:
            raise SignalError(f"samples must be 2-D (channels, samples), got shape {self.samples.shape}")
        if len(self.channels) != self.samples.shape[0]:
            raise SignalError(f"{len(self.channels)} channel names for {self.samples.shape[0]} channels")

    @property
    def duration(self) -> float:
        return self.samples.shape[1] / self.sample_rate


@dataclass
class FeatureWindow:
    frames: np.ndarray  # (T, H, W, 1)
    start_time: float
    meta: dict = field(default_factory=dict)


def frame_signal(sig: SignalRecord, frame_len_s: float, frame_step_s: float) -> np.ndarray:
    """Cut every channel into Hamming-tapered frames.

    Frame ``k`` covers ``[k * step, k * step + len)``. Returns an array of
    shape ``(H, K, L)`` with ``K = floor((duration - len) / step) + 1``.
    """
    if not frame_len_s >= frame_step_s > 0:
        raise SignalError(f"need frame_len >= frame_step > 0, got {frame_len_s}, {frame_step_s}")
    length = int(round(frame_len_s * sig.sample_rate))
    step = int(round(frame_step_s * sig.sample_rate))
    if step < 1:
        raise SignalError(f"frame step of {frame_step_s} s is below one sample at {sig.sample_rate} Hz")
    n = sig.samples.shape[1]
    if n < length:
        raise SignalError(f"signal of {n} samples is shorter than one {length}-sample frame")
    count = (n - length) // step + 1
    starts = np.arange(count) * step
    idx = starts[:, None] + np.arange(length)[None, :]
    return sig.samples[:, idx] * np.hamming(length)


def linear_filterbank(n_filters: int, n_fft: int, sample_rate: float) -> np.ndarray:
    """Triangular filters with centers evenly spaced on ``[0, nyquist]``.

    Returns weights of shape ``(n_filters, n_fft // 2 + 1)``.
    """
    edges = np.linspace(0.0, sample_rate / 2.0, n_filters + 2)
    freqs = np.fft.rfftfreq(n_fft, d=1.0 / sample_rate)
    lo, center, hi = edges[:-2, None], edges[1:-1, None], edges[2:, None]
    rising = (freqs[None, :] - lo) / (center - lo)
    falling = (hi - freqs[None, :]) / (hi - center)
    return np.maximum(0.0, np.minimum(rising, falling))


def _n_fft(length: int) -> int:
    return 1 << max(1, int(np.ceil(np.log2(length))))


def filterbank_energies(block: np.ndarray, sample_rate: float, n_filters: int) -> np.ndarray:
    """Power in each linear triangular filter, last axis of ``block`` is time."""
    n_fft = _n_fft(block.shape[-1])
    power = np.abs(np.fft.rfft(block, n=n_fft, axis=-1)) ** 2
    return power @ linear_filterbank(n_filters, n_fft, sample_rate).T


def lfcc(block: np.ndarray, sample_rate: float, n_filters: int = 24, n_ceps: int = 8):
    """Linear-frequency cepstra and log energy of one frame (or a stack of frames).

    ``block`` may carry leading batch axes; the last axis is time. Returns
    ``(cepstra[..., n_ceps], log_energy[...])``.
    """
    block = np.asarray(block, dtype=np.float64)
    if block.shape[-1] < 2:
        raise SignalError("an LFCC frame needs at least 2 samples")
    if n_ceps > n_filters:
        raise ValueError(f"n_ceps ({n_ceps}) cannot exceed n_filters ({n_filters})")
    energies = filterbank_energies(block, sample_rate, n_filters)
    log_fb = np.log(np.maximum(energies, LOG_FLOOR))
    ceps = dct(log_fb, type=2, norm="ortho", axis=-1)[..., :n_ceps]
    log_energy = np.log(np.maximum(np.sum(block * block, axis=-1), LOG_FLOOR))
    return ceps, log_energy


def deltas(series: np.ndarray, order: int = 1) -> np.ndarray:
    """Regression deltas along axis 0 with replicated edge frames.

    ``d_t = sum_k k (x_{t+k} - x_{t-k}) / (2 sum_k k^2)`` for ``k = 1..2``.
    ``order=2`` applies the same operator twice.
    """
    if order not in (1, 2):
        raise ValueError(f"delta order must be 1 or 2, got {order}")
    series = np.asarray(series, dtype=np.float64)
    span = 2 * DELTA_SPAN + 1
    if series.shape[0] < span:
        raise SignalError(f"delta regression needs at least {span} frames, got {series.shape[0]}")
    out = series
    for _ in range(order):
        out = _delta_once(out)
    return out


def _delta_once(x: np.ndarray) -> np.ndarray:
    n = x.shape[0]
    pad = np.concatenate([np.repeat(x[:1], DELTA_SPAN, axis=0), x, np.repeat(x[-1:], DELTA_SPAN, axis=0)])
    denom = 2.0 * sum(k * k for k in range(1, DELTA_SPAN + 1))
    acc = np.zeros_like(x)
    for k in range(1, DELTA_SPAN + 1):
        acc += k * (pad[DELTA_SPAN + k:DELTA_SPAN + k + n] - pad[DELTA_SPAN - k:DELTA_SPAN - k + n])
    return acc / denom


def differential_energy(log_energy: np.ndarray, span: int) -> np.ndarray:
    """Max minus min log energy over a centered neighbourhood of ``span`` frames (axis 0)."""
    half = span // 2
    n = log_energy.shape[0]
    out = np.empty_like(log_energy)
    for t in range(n):
        seg = log_energy[max(0, t - half):min(n, t + half + 1)]
        out[t] = seg.max(axis=0) - seg.min(axis=0)
    return out


def frame_features(sig: SignalRecord, cfg: FeatureConfig = FeatureConfig()) -> np.ndarray:
    """Per-frame feature vectors for every channel, shape ``(K, H, W)``.

    The signal is extended by ``frame_len - frame_step`` replicated samples so
    that a record of ``d`` seconds yields ``floor(d / step)`` frames, the
    last of which starts one step before the end.
    """
    extra = int(round((cfg.frame_len_s - cfg.frame_step_s) * sig.sample_rate))
    samples = sig.samples
    if extra > 0:
        samples = np.concatenate([samples, np.repeat(samples[:, -1:], extra, axis=1)], axis=1)
    padded = SignalRecord(sig.sample_rate, sig.channels, samples)
    blocks = frame_signal(padded, cfg.frame_len_s, cfg.frame_step_s)  # (H, K, L)
    ceps, energy = lfcc(blocks, sig.sample_rate, cfg.n_filters, cfg.n_ceps)
    # time-major from here on: (K, H, ...)
    ceps = np.transpose(ceps, (1, 0, 2))
    energy = energy.T
    base = np.concatenate(
        [ceps[..., 1:], energy[..., None], differential_energy(energy, cfg.diff_energy_span)[..., None]],
        axis=-1,
    )
    if base.shape[-1] != len(BASE_FEATURES):
        raise ValueError(f"n_ceps={cfg.n_ceps} does not give the {len(BASE_FEATURES)} base features")
    d1 = deltas(base, 1)
    d2 = deltas(base, 2)
    parts = [base, d1, d2]
    picked = [
        parts[order][..., [BASE_FEATURES.index(name) for name in names]]
        for order, names in FEATURE_LAYOUT.items()
    ]
    return np.concatenate(picked, axis=-1)


def n_windows(duration: float, window_s: float = 21.0, stride_s: float = 1.0) -> int:
    if duration < window_s:
        return 0
    return int(np.floor((duration - window_s) / stride_s + 1e-9)) + 1


def build_windows(sig: SignalRecord, cfg: FeatureConfig = FeatureConfig()) -> list[FeatureWindow]:
    """Group frame features into ``(T, H, W, 1)`` windows advancing by ``window_stride_s``."""
    if sig.samples.shape[0] != cfg.n_channels:
        raise MontageError(f"expected {cfg.n_channels} channels, got {sig.samples.shape[0]}")
    count = n_windows(sig.duration, cfg.window_s, cfg.window_stride_s)
    if count == 0:
        raise SignalError(f"signal of {sig.duration:g} s is shorter than one {cfg.window_s:g} s window")
    feats = frame_features(sig, cfg)
    t_frames = cfg.frames_per_window
    hop = int(round(cfg.window_stride_s / cfg.frame_step_s))
    windows = []
    for k in range(count):
        block = feats[k * hop:k * hop + t_frames]
        if block.shape[0] != t_frames:
            raise SignalError(f"window {k} has {block.shape[0]} frames, expected {t_frames}")
        windows.append(FeatureWindow(block[..., None].copy(), k * cfg.window_stride_s))
    return windows


# ---------------------------------------------------------------- file I/O

def read_signal_csv(path) -> SignalRecord:
    text = Path(path).read_text()
    reader = csv.reader(io.StringIO(text))
    try:
        header = next(reader)
    except StopIteration:
        raise FormatError(f"{path}: empty file") from None
    if not header or header[0].strip() != "time":
        raise FormatError(f"{path}: first column must be 'time'")
    channels = [h.strip() for h in header[1:]]
    try:
        rows = np.array([[float(v) for v in row] for row in reader if row], dtype=np.float64)
    except ValueError as exc:
        raise FormatError(f"{path}: {exc}") from None
    if rows.ndim != 2 or rows.shape[0] < 2 or rows.shape[1] != len(header):
        raise FormatError(f"{path}: need at least two rows of {len(header)} columns")
    dt = np.diff(rows[:, 0])
    if np.any(dt <= 0):
        raise FormatError(f"{path}: time column must increase")
    rate = float(round(1.0 / np.median(dt), 6))
    return SignalRecord(rate, channels, rows[:, 1:].T.copy())


def write_signal_csv(path, sig: SignalRecord) -> None:
    n = sig.samples.shape[1]
    lines = ["time," + ",".join(sig.channels)]
    t = np.arange(n) / sig.sample_rate
    for i in range(n):
        lines.append(f"{float(t[i])!r}," + ",".join(repr(float(v)) for v in sig.samples[:, i]))
    Path(path).write_text("\n".join(lines) + "\n")


_EEGR_HEADER = struct.Struct("<4sIIQ")


def read_signal_binary(path) -> SignalRecord:
    data = Path(path).read_bytes()
    if len(data) < _EEGR_HEADER.size:
        raise FormatError(f"{path}: truncated header")
    magic, rate, n_ch, n_samp = _EEGR_HEADER.unpack_from(data)
    if magic != b"EEGR":
        raise FormatError(f"{path}: bad magic {magic!r}")
    expected = _EEGR_HEADER.size + 4 * n_ch * n_samp
    if len(data) != expected:
        raise FormatError(f"{path}: expected {expected} bytes, found {len(data)}")
    samples = np.frombuffer(data, dtype="<f4", offset=_EEGR_HEADER.size).reshape(n_ch, n_samp)
    return SignalRecord(float(rate), [f"ch{i + 1}" for i in range(n_ch)], samples.astype(np.float64))


def write_signal_binary(path, sig: SignalRecord) -> None:
    rate = int(round(sig.sample_rate))
    if rate != sig.sample_rate:
        raise FormatError("binary signal files store an integer sample rate")
    n_ch, n_samp = sig.samples.shape
    payload = _EEGR_HEADER.pack(b"EEGR", rate, n_ch, n_samp) + sig.samples.astype("<f4").tobytes()
    Path(path).write_bytes(payload)


def read_signal(path) -> SignalRecord:
    """Dispatch on content: binary files start with ``EEGR``, anything else is CSV."""
    with open(path, "rb") as fh:
        head = fh.read(4)
    if head == b"EEGR":
        return read_signal_binary(path)
    return read_signal_csv(path)
