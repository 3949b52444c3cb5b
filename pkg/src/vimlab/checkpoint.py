"""Binary checkpoint container.

Layout::

    8 bytes   magic b"VIMCKPT1"
    8 bytes   little-endian uint64 header length H
    H bytes   UTF-8 JSON header
    ...       raw little-endian float64 blocks, one per parameter,
              in declaration order

The header records the architecture, each parameter's name and shape, and
free-form metadata (objective, seed, the run configuration).
"""

from __future__ import annotations

import json
import struct

import numpy as np

from .errors import CheckpointError
from .model import StochasticClassifier

MAGIC = b"VIMCKPT1"
FORMAT_VERSION = 1


def save_checkpoint(path, model, **meta):
    header = {
        "format_version": FORMAT_VERSION,
        "architecture": model.architecture(),
        "params": [{"name": name, "shape": list(p.shape)} for name, p in model.params],
        "meta": meta,
    }
    blob = json.dumps(header, sort_keys=True).encode("utf-8")
    with open(path, "wb") as f:
        f.write(MAGIC)
        f.write(struct.pack("<Q", len(blob)))
        f.write(blob)
        for _, p in model.params:
            f.write(np.ascontiguousarray(p.data, dtype="<f8").tobytes())


def read_checkpoint(path):
    """Return (header, list of arrays) without building a model."""
    with open(path, "rb") as f:
        raw = f.read()
    if raw[:8] != MAGIC:
        raise CheckpointError(f"{path}: not a checkpoint (bad magic)")
    (hlen,) = struct.unpack("<Q", raw[8:16])
    header = json.loads(raw[16 : 16 + hlen].decode("utf-8"))
    if header.get("format_version") != FORMAT_VERSION:
        raise CheckpointError(f"{path}: unsupported format version {header.get('format_version')}")
    offset = 16 + hlen
    arrays = []
    for spec in header["params"]:
        n = int(np.prod(spec["shape"], dtype=np.int64))
        end = offset + 8 * n
        if end > len(raw):
            raise CheckpointError(f"{path}: truncated in block {spec['name']}")
        arrays.append(np.frombuffer(raw[offset:end], dtype="<f8").reshape(spec["shape"]).astype(np.float64))
        offset = end
    if offset != len(raw):
        raise CheckpointError(f"{path}: {len(raw) - offset} trailing bytes")
    return header, arrays


def load_into(model, path):
    header, arrays = read_checkpoint(path)
    expected = [(name, list(p.shape)) for name, p in model.params]
    found = [(s["name"], s["shape"]) for s in header["params"]]
    if expected != found:
        raise CheckpointError(f"checkpoint layout {found} does not match model layout {expected}")
    for (_, p), arr in zip(model.params, arrays):
        p.data = arr.copy()
    return header


def load_checkpoint(path):
    """Build a model from a checkpoint; returns (model, header)."""
    header, _ = read_checkpoint(path)
    model = StochasticClassifier(**header["architecture"])
    load_into(model, path)
    return model, header
