"""Little-endian tensor container shared by checkpoints and feature files.

Layout::

    magic        4 bytes   (b"SZNT" for checkpoints, b"SZFT" for features)
    version      u32
    config_len   u32
    config       config_len bytes of UTF-8 canonical text (see below)
    n_tensors    u32
    n_tensors records of:
        name_len u32
        name     name_len bytes UTF-8
        rank     u32
        extents  u64 * rank
        values   f64 * prod(extents), row-major

Canonical config text is one ``key=value`` line per entry, keys sorted,
values JSON-encoded with sorted keys and no whitespace, so equal configs
always serialize to equal bytes.
"""

from __future__ import annotations

import json
import os
import struct
import tempfile
from pathlib import Path

import numpy as np

from .errors import FormatError

VERSION = 1


def canonical_config(config: dict) -> str:
    return "".join(
        f"{key}={json.dumps(config[key], sort_keys=True, separators=(',', ':'))}\n" for key in sorted(config)
    )


def parse_config(text: str) -> dict:
    out = {}
    for line in text.splitlines():
        if not line:
            continue
        key, sep, value = line.partition("=")
        if not sep:
            raise FormatError(f"config line without '=': {line!r}")
        out[key] = json.loads(value)
    return out


def dumps(magic: bytes, config: dict, tensors: dict[str, np.ndarray]) -> bytes:
    cfg = canonical_config(config).encode("utf-8")
    parts = [magic, struct.pack("<II", VERSION, len(cfg)), cfg, struct.pack("<I", len(tensors))]
    for name, arr in tensors.items():
        arr = np.asarray(arr, dtype="<f8")
        raw = name.encode("utf-8")
        parts.append(struct.pack("<I", len(raw)) + raw)
        parts.append(struct.pack("<I", arr.ndim) + struct.pack(f"<{arr.ndim}Q", *arr.shape))
        parts.append(np.ascontiguousarray(arr).tobytes())
    return b"".join(parts)


def loads(data: bytes, magic: bytes):
    """Parse a container; returns ``(config, tensors)``."""
    view = memoryview(data)
    pos = 0

    def take(n):
        nonlocal pos
        if pos + n > len(view):
            raise FormatError("truncated container")
        chunk = view[pos:pos + n]
        pos += n
        return chunk

    found = bytes(take(4))
    if found != magic:
        raise FormatError(f"bad magic {found!r}, expected {magic!r}")
    version, cfg_len = struct.unpack("<II", take(8))
    if version != VERSION:
        raise FormatError(f"unsupported container version {version}")
    config = parse_config(bytes(take(cfg_len)).decode("utf-8"))
    (count,) = struct.unpack("<I", take(4))
    tensors = {}
    for _ in range(count):
        (name_len,) = struct.unpack("<I", take(4))
        name = bytes(take(name_len)).decode("utf-8")
        (rank,) = struct.unpack("<I", take(4))
        shape = struct.unpack(f"<{rank}Q", take(8 * rank))
        size = int(np.prod(shape)) if rank else 1
        values = np.frombuffer(bytes(take(8 * size)), dtype="<f8").astype(np.float64)
        tensors[name] = values.reshape(shape)
    if pos != len(view):
        raise FormatError(f"{len(view) - pos} trailing bytes after last tensor")
    return config, tensors


def write_atomic(path, payload: bytes) -> None:
    """Write via a temporary file in the same directory, then rename."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.")
    try:
        with os.fdopen(fd, "wb") as fh:
            fh.write(payload)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def save(path, magic: bytes, config: dict, tensors: dict[str, np.ndarray]) -> None:
    write_atomic(path, dumps(magic, config, tensors))


def load(path, magic: bytes):
    return loads(Path(path).read_bytes(), magic)
