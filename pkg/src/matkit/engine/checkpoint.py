"""Flat binary checkpoint container.

Layout: 8-byte little-endian header length, a UTF-8 JSON header
{"entries": [{"name", "shape", "offset"}], "meta": {...}}, then the
concatenated little-endian float32 arrays.  Offsets are byte offsets
into the blob.
"""

from __future__ import annotations

import json
import struct
from pathlib import Path

import numpy as np

from ..errors import IoError


def save_arrays(path, arrays: dict[str, np.ndarray], meta: dict | None = None) -> None:
    """Write named float32 arrays plus an optional JSON-able meta dict."""
    entries = []
    blobs = []
    offset = 0
    for name in sorted(arrays):
        arr = np.ascontiguousarray(arrays[name], dtype="<f4")
        entries.append({"name": name, "shape": list(arr.shape), "offset": offset})
        blobs.append(arr.tobytes())
        offset += len(blobs[-1])
    header = json.dumps({"entries": entries, "meta": meta or {}}).encode("utf-8")
    try:
        path = Path(path)
        path.parent.mkdir(parents=True, exist_ok=True)
        with open(path, "wb") as f:
            f.write(struct.pack("<Q", len(header)))
            f.write(header)
            for b in blobs:
                f.write(b)
    except OSError as e:
        raise IoError(f"cannot write checkpoint {path}: {e}") from e


def load_arrays(path) -> tuple[dict[str, np.ndarray], dict]:
    """Read a checkpoint back as ({name: float32 array}, meta)."""
    try:
        raw = Path(path).read_bytes()
    except OSError as e:
        raise IoError(f"cannot read checkpoint {path}: {e}") from e
    (hlen,) = struct.unpack("<Q", raw[:8])
    header = json.loads(raw[8:8 + hlen].decode("utf-8"))
    blob = raw[8 + hlen:]
    arrays = {}
    for entry in header["entries"]:
        shape = tuple(entry["shape"])
        count = int(np.prod(shape)) if shape else 1
        start = entry["offset"]
        arr = np.frombuffer(blob, dtype="<f4", count=count, offset=start)
        arrays[entry["name"]] = arr.reshape(shape).copy()
    return arrays, header.get("meta", {})
