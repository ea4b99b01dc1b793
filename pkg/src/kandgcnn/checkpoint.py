"""``KDK1`` checkpoint files: config echo plus named float32 tensors, little-endian.

Layout::

    b"KDK1" | u16 version
    u32 pair count, then per pair: u32 len + UTF-8 key, u32 len + UTF-8 value
    u32 tensor count, then per tensor:
        u32 len + UTF-8 name | u8 rank | rank x u64 dims | prod(dims) x f32
"""
from __future__ import annotations

import io
import struct
from pathlib import Path

import numpy as np

from .errors import ContractError, FormatError
from .model import Model, ModelConfig

MAGIC = b"KDK1"
VERSION = 1
MOMENTUM_PREFIX = "momentum/"


def _write_str(buf, text):
    raw = text.encode("utf-8")
    buf.write(struct.pack("<I", len(raw)))
    buf.write(raw)


class _Reader:
    def __init__(self, data):
        self.data = data
        self.pos = 0

    def take(self, n):
        if self.pos + n > len(self.data):
            raise FormatError(f"checkpoint truncated at byte {self.pos} (wanted {n} more)")
        chunk = self.data[self.pos:self.pos + n]
        self.pos += n
        return chunk

    def unpack(self, fmt):
        return struct.unpack(fmt, self.take(struct.calcsize(fmt)))

    def string(self):
        (n,) = self.unpack("<I")
        try:
            return self.take(n).decode("utf-8")
        except UnicodeDecodeError as exc:
            raise FormatError(f"invalid UTF-8 string in checkpoint: {exc}") from None


def dumps(config_echo: dict, tensors: dict) -> bytes:
    buf = io.BytesIO()
    buf.write(MAGIC)
    buf.write(struct.pack("<H", VERSION))
    buf.write(struct.pack("<I", len(config_echo)))
    for key, value in config_echo.items():
        _write_str(buf, str(key))
        _write_str(buf, str(value))
    buf.write(struct.pack("<I", len(tensors)))
    for name, arr in tensors.items():
        arr = np.asarray(arr)
        if arr.ndim > 255:
            raise ContractError(f"tensor {name!r} has too many dimensions")
        _write_str(buf, name)
        buf.write(struct.pack("<B", arr.ndim))
        buf.write(struct.pack(f"<{arr.ndim}Q", *arr.shape))
        buf.write(np.ascontiguousarray(arr, dtype="<f4").tobytes())
    return buf.getvalue()


def loads(data: bytes) -> tuple[dict, dict]:
    r = _Reader(data)
    magic = r.take(4)
    if magic != MAGIC:
        raise FormatError(f"not a checkpoint: magic {magic!r}")
    (version,) = r.unpack("<H")
    if version != VERSION:
        raise FormatError(f"unsupported checkpoint version {version}")
    (npairs,) = r.unpack("<I")
    echo = {}
    for _ in range(npairs):
        key = r.string()
        echo[key] = r.string()
    (ntensors,) = r.unpack("<I")
    tensors = {}
    for _ in range(ntensors):
        name = r.string()
        (rank,) = r.unpack("<B")
        dims = r.unpack(f"<{rank}Q")
        count = int(np.prod(dims, dtype=np.int64)) if rank else 1
        raw = r.take(4 * count)
        tensors[name] = np.frombuffer(raw, dtype="<f4").reshape(dims).astype(np.float64)
    if r.pos != len(data):
        raise FormatError(f"{len(data) - r.pos} trailing bytes after checkpoint payload")
    return echo, tensors


def save_checkpoint(path, model: Model, meta: dict | None = None, with_momentum=True) -> None:
    echo = model.config.to_strings()
    if meta:
        echo.update({f"meta.{k}": str(v) for k, v in meta.items()})
    tensors = {name: p.value for name, p in model.named_parameters().items()}
    if with_momentum:
        for name, p in model.named_parameters().items():
            tensors[MOMENTUM_PREFIX + name] = p.momentum_buffer
    Path(path).write_bytes(dumps(echo, tensors))


def load_checkpoint(path) -> tuple[Model, dict]:
    """Rebuild the model stored at ``path``; returns it with the ``meta.*`` echo entries."""
    echo, tensors = loads(Path(path).read_bytes())
    config = ModelConfig.from_strings(echo)
    model = Model(config, rng=np.random.default_rng(0))
    for name, p in model.named_parameters().items():
        if name not in tensors:
            raise FormatError(f"checkpoint lacks tensor {name!r}")
        if tensors[name].shape != p.shape:
            raise FormatError(
                f"tensor {name!r} has shape {tensors[name].shape}, model expects {p.shape}"
            )
        p.value[...] = tensors[name]
        mom = tensors.get(MOMENTUM_PREFIX + name)
        if mom is not None:
            p.momentum_buffer[...] = mom
    meta = {k[len("meta."):]: v for k, v in echo.items() if k.startswith("meta.")}
    return model, meta
