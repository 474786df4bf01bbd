"""Checkpoint container: magic "PSEC", version 1.

Layout: 4 magic bytes, little-endian uint32 version, little-endian uint32
header length, UTF-8 JSON header (architecture, tensor names and shapes,
optional metadata), then each tensor's float64 values little-endian in
row-major order, in header order. Writes are atomic (tmp file + rename).
"""

from __future__ import annotations

import json
import os
import struct
from pathlib import Path

import numpy as np

from .model import GruConfig, ModelParams, tensor_shape

MAGIC = b"PSEC"
VERSION = 1


class CheckpointError(ValueError):
    """Raised for bad magic, unsupported version, or inconsistent shapes."""


def save_checkpoint(path, params: ModelParams, extra: dict | None = None) -> None:
    header = {
        "config": params.config.to_dict(),
        "tensors": [[name, list(values.shape)] for name, values in params.tensors.items()],
        "extra": extra or {},
    }
    header_bytes = json.dumps(header, sort_keys=True).encode("utf-8")
    path = Path(path)
    tmp = path.with_name(path.name + ".tmp")
    with open(tmp, "wb") as f:
        f.write(MAGIC)
        f.write(struct.pack("<I", VERSION))
        f.write(struct.pack("<I", len(header_bytes)))
        f.write(header_bytes)
        for values in params.tensors.values():
            f.write(np.ascontiguousarray(values, dtype="<f8").tobytes())
    os.replace(tmp, path)


def load_checkpoint(path) -> tuple[ModelParams, dict]:
    path = Path(path)
    if not path.exists():
        raise FileNotFoundError(f"checkpoint not found: {path}")
    blob = path.read_bytes()
    if blob[:4] != MAGIC:
        raise CheckpointError(f"{path}: bad magic {blob[:4]!r}, expected {MAGIC!r}")
    if len(blob) < 12:
        raise CheckpointError(f"{path}: truncated header")
    (version,) = struct.unpack("<I", blob[4:8])
    if version != VERSION:
        raise CheckpointError(f"{path}: unsupported version {version}")
    (header_len,) = struct.unpack("<I", blob[8:12])
    try:
        header = json.loads(blob[12 : 12 + header_len].decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise CheckpointError(f"{path}: unreadable header ({exc})") from exc
    config = GruConfig.from_dict(header["config"])

    tensors = {}
    offset = 12 + header_len
    for name, shape in header["tensors"]:
        shape = tuple(shape)
        if shape != tensor_shape(name, config):
            raise CheckpointError(
                f"{path}: tensor {name} shape {shape} inconsistent with architecture"
            )
        nbytes = int(np.prod(shape)) * 8
        chunk = blob[offset : offset + nbytes]
        if len(chunk) != nbytes:
            raise CheckpointError(f"{path}: truncated tensor data for {name}")
        tensors[name] = np.frombuffer(chunk, dtype="<f8").reshape(shape).copy()
        offset += nbytes
    if offset != len(blob):
        raise CheckpointError(f"{path}: {len(blob) - offset} trailing bytes")
    return ModelParams(config, tensors), header.get("extra", {})
