"""Binary checkpoint format for models and optimizer accumulators.

Layout (all integers little-endian)::

    magic "BGSN" | u32 version | u8 precision | u8 flags
    u32 json_len | architecture JSON
    u16 entry_count
    per entry: u16 name_len | name utf-8 | u8 ndim | u32 dims...
    raw tensor data in entry order

precision 0 stores float64, 1 stores float32. flags bit 0 marks the
presence of optimizer accumulator entries (named "opt.<parameter>").
Loading rebuilds the architecture from the JSON and refuses any manifest
whose names or shapes disagree with it.
"""

from __future__ import annotations

import json
import struct
from dataclasses import asdict
from pathlib import Path
from typing import Optional

import numpy as np

from .nn import Model, ModelConfig

MAGIC = b"BGSN"
VERSION = 1
_PRECISION = {0: np.dtype("<f8"), 1: np.dtype("<f4")}


class CheckpointError(ValueError):
    """Raised for unreadable, mismatched, or truncated checkpoint files."""


def save_checkpoint(
    model: Model,
    path,
    accumulators: Optional[dict[str, np.ndarray]] = None,
    precision: Optional[str] = None,
) -> None:
    """Serialize a model (parameters + running stats), optionally with
    per-parameter optimizer accumulators. Tensors are stored in the model's
    own precision unless overridden."""
    precision = precision or model.config.dtype
    dtype = {"float64": _PRECISION[0], "float32": _PRECISION[1]}[precision]
    prec_flag = 0 if precision == "float64" else 1

    tensors = dict(model.state_tensors())
    flags = 0
    if accumulators is not None:
        flags |= 1
        params = model.parameters()
        if set(accumulators) != set(params):
            raise CheckpointError("optimizer accumulators do not match model parameters")
        for name, acc in accumulators.items():
            tensors[f"opt.{name}"] = acc

    cfg_json = json.dumps(asdict(model.config)).encode("utf-8")
    out = bytearray()
    out += MAGIC
    out += struct.pack("<IBB", VERSION, prec_flag, flags)
    out += struct.pack("<I", len(cfg_json)) + cfg_json
    out += struct.pack("<H", len(tensors))
    for name, arr in tensors.items():
        enc = name.encode("utf-8")
        out += struct.pack("<H", len(enc)) + enc
        out += struct.pack("<B", arr.ndim)
        out += struct.pack(f"<{arr.ndim}I", *arr.shape)
    for arr in tensors.values():
        out += np.ascontiguousarray(arr, dtype=dtype).tobytes()

    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_bytes(bytes(out))


class _Reader:
    def __init__(self, data: bytes, path):
        self.data = data
        self.pos = 0
        self.path = path

    def take(self, n: int) -> bytes:
        if self.pos + n > len(self.data):
            raise CheckpointError(f"{self.path}: truncated checkpoint")
        chunk = self.data[self.pos : self.pos + n]
        self.pos += n
        return chunk

    def unpack(self, fmt: str):
        return struct.unpack(fmt, self.take(struct.calcsize(fmt)))


def load_checkpoint(path) -> tuple[Model, Optional[dict[str, np.ndarray]]]:
    """Load a checkpoint; returns (model, accumulators-or-None).

    Validates magic, version, and every manifest entry against the
    architecture the file declares.
    """
    r = _Reader(Path(path).read_bytes(), path)
    if r.take(4) != MAGIC:
        raise CheckpointError(f"{path}: not a checkpoint file (bad magic)")
    version, prec_flag, flags = r.unpack("<IBB")
    if version != VERSION:
        raise CheckpointError(f"{path}: unsupported checkpoint version {version}")
    if prec_flag not in _PRECISION:
        raise CheckpointError(f"{path}: unknown precision flag {prec_flag}")
    dtype = _PRECISION[prec_flag]

    (cfg_len,) = r.unpack("<I")
    try:
        cfg_fields = json.loads(r.take(cfg_len).decode("utf-8"))
        cfg_fields["conv_channels"] = tuple(cfg_fields["conv_channels"])
        cfg_fields["hidden_sizes"] = tuple(cfg_fields["hidden_sizes"])
        config = ModelConfig(**cfg_fields)
    except (ValueError, TypeError, KeyError) as exc:
        raise CheckpointError(f"{path}: invalid architecture header: {exc}") from exc

    (count,) = r.unpack("<H")
    manifest = []
    for _ in range(count):
        (name_len,) = r.unpack("<H")
        name = r.take(name_len).decode("utf-8")
        (ndim,) = r.unpack("<B")
        shape = r.unpack(f"<{ndim}I")
        manifest.append((name, shape))

    model = Model(config)
    expected = model.state_tensors()
    has_opt = bool(flags & 1)
    if has_opt:
        expected = dict(expected)
        for name, p in model.parameters().items():
            expected[f"opt.{name}"] = np.zeros_like(p)

    names = [name for name, _ in manifest]
    if set(names) != set(expected) or len(names) != len(set(names)):
        raise CheckpointError(f"{path}: manifest does not match the declared architecture")
    for name, shape in manifest:
        if tuple(expected[name].shape) != shape:
            raise CheckpointError(
                f"{path}: shape {shape} for '{name}' does not match architecture "
                f"{tuple(expected[name].shape)}"
            )

    accumulators: Optional[dict[str, np.ndarray]] = {} if has_opt else None
    state = model.state_tensors()
    model_dtype = model.config.np_dtype
    for name, shape in manifest:
        n_items = int(np.prod(shape, dtype=np.int64)) if shape else 1
        arr = np.frombuffer(r.take(n_items * dtype.itemsize), dtype=dtype)
        arr = arr.astype(model_dtype).reshape(shape)
        if name.startswith("opt."):
            accumulators[name[4:]] = arr
        else:
            state[name][...] = arr
    if r.pos != len(r.data):
        raise CheckpointError(f"{path}: trailing bytes after tensor data")
    return model, accumulators
