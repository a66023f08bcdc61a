"""Flat binary checkpoint of named tensors with a JSON header.

Layout (little-endian):

    bytes 0..8    header length H as an unsigned 64-bit integer
    bytes 8..8+H  UTF-8 JSON header
    bytes 8+H..   raw tensor buffers, contiguous, in header order

Header schema::

    {
      "version": 1,
      "meta": { ... arbitrary JSON metadata ... },
      "tensors": {
        "<name>": {"dtype": "float64", "shape": [..], "offset": N, "nbytes": M},
        ...
      }
    }

Offsets are relative to the start of the data section. All tensors are
float64, C-contiguous.
"""

from __future__ import annotations

import json
import struct
from pathlib import Path

import numpy as np

_VERSION = 1


def save_checkpoint(path: str | Path, tensors: dict[str, np.ndarray], meta: dict | None = None) -> None:
    entries: dict[str, dict] = {}
    blobs: list[bytes] = []
    offset = 0
    for name, array in tensors.items():
        buf = np.ascontiguousarray(array, dtype=np.float64).tobytes()
        entries[name] = {
            "dtype": "float64",
            "shape": list(array.shape),
            "offset": offset,
            "nbytes": len(buf),
        }
        blobs.append(buf)
        offset += len(buf)
    header = json.dumps({"version": _VERSION, "meta": meta or {}, "tensors": entries}).encode("utf-8")
    with Path(path).open("wb") as handle:
        handle.write(struct.pack("<Q", len(header)))
        handle.write(header)
        for blob in blobs:
            handle.write(blob)


def load_checkpoint(path: str | Path) -> tuple[dict[str, np.ndarray], dict]:
    raw = Path(path).read_bytes()
    if len(raw) < 8:
        raise ValueError(f"{path}: not a checkpoint file (too short)")
    (header_len,) = struct.unpack("<Q", raw[:8])
    header = json.loads(raw[8 : 8 + header_len].decode("utf-8"))
    if header.get("version") != _VERSION:
        raise ValueError(f"{path}: unsupported checkpoint version {header.get('version')}")
    data = raw[8 + header_len :]
    tensors: dict[str, np.ndarray] = {}
    for name, entry in header["tensors"].items():
        start, nbytes = entry["offset"], entry["nbytes"]
        array = np.frombuffer(data[start : start + nbytes], dtype=np.float64)
        tensors[name] = array.reshape(entry["shape"]).copy()
    return tensors, header["meta"]
