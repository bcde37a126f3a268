"""Versioned binary checkpoints.

Layout (all integers little-endian u32)::

    b"RHEB" | version | config_len | config JSON (UTF-8, config_len bytes)
    | tensor_count | per tensor: ndim, dims..., float64 LE data (row-major)

Tensors follow :meth:`ModelConfig.param_shapes` order. Optimizer moments
are not stored; a loaded state starts with fresh Adam buffers.
"""

from __future__ import annotations

import json
import struct
from dataclasses import asdict
from pathlib import Path

import numpy as np

from .model import ModelConfig, ModelState

MAGIC = b"RHEB"
FORMAT_VERSION = 1


class CheckpointError(ValueError):
    pass


def encode_checkpoint(state: ModelState) -> bytes:
    config = json.dumps(asdict(state.config), sort_keys=True).encode("utf-8")
    parts = [MAGIC, struct.pack("<II", FORMAT_VERSION, len(config)), config]
    parts.append(struct.pack("<I", len(state.params)))
    for name in state.config.param_shapes():
        arr = np.ascontiguousarray(state.params[name], dtype="<f8")
        parts.append(struct.pack(f"<I{arr.ndim}I", arr.ndim, *arr.shape))
        parts.append(arr.tobytes())
    return b"".join(parts)


def decode_checkpoint(data: bytes) -> ModelState:
    view = memoryview(data)
    pos = 0

    def take(n):
        nonlocal pos
        if pos + n > len(view):
            raise CheckpointError("checkpoint truncated")
        chunk = view[pos : pos + n]
        pos += n
        return chunk

    def u32(count=1):
        return struct.unpack(f"<{count}I", take(4 * count))

    if bytes(take(4)) != MAGIC:
        raise CheckpointError("not an RHEB checkpoint (bad magic)")
    (version,) = u32()
    if version != FORMAT_VERSION:
        raise CheckpointError(f"unsupported checkpoint version {version}")
    (config_len,) = u32()
    try:
        config = ModelConfig(**json.loads(bytes(take(config_len)).decode("utf-8")))
    except (TypeError, ValueError) as exc:
        raise CheckpointError(f"bad model config in checkpoint: {exc}") from exc
    shapes = config.param_shapes()
    (count,) = u32()
    if count != len(shapes):
        raise CheckpointError(f"expected {len(shapes)} tensors, found {count}")
    params = {}
    for name, expected in shapes.items():
        (ndim,) = u32()
        shape = u32(ndim)
        if tuple(shape) != expected:
            raise CheckpointError(f"{name}: shape {shape} does not match config {expected}")
        size = int(np.prod(shape))
        params[name] = np.frombuffer(take(8 * size), dtype="<f8").astype(np.float64).reshape(shape)
    if pos != len(view):
        raise CheckpointError(f"{len(view) - pos} trailing bytes after last tensor")
    zeros = {k: np.zeros_like(p) for k, p in params.items()}
    return ModelState(config, params, zeros, {k: np.zeros_like(p) for k, p in params.items()})


def save_checkpoint(path, state: ModelState) -> None:
    Path(path).write_bytes(encode_checkpoint(state))


def load_checkpoint(path) -> ModelState:
    path = Path(path)
    if not path.is_file():
        raise CheckpointError(f"checkpoint not found: {path}")
    return decode_checkpoint(path.read_bytes())
