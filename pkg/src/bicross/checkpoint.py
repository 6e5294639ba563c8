"""Single-file archive for named float64 arrays plus JSON metadata.

Layout (little-endian): magic ``BCK1`` | version u16 | header_len u32 |
header JSON (utf-8) | raw array payloads back to back.  The header JSON is
serialized with sorted keys, so identical content yields identical bytes.
"""

from __future__ import annotations

import json
import os
import struct

import numpy as np

from .errors import CheckpointError

MAGIC = b"BCK1"
VERSION = 1
_PREFIX = struct.Struct("<4sHI")


def save_archive(
    path: str | os.PathLike, arrays: dict[str, np.ndarray], meta: dict, version: int = VERSION
) -> None:
    entries = []
    offset = 0
    blobs = []
    for name, arr in arrays.items():
        arr = np.ascontiguousarray(arr)
        blob = arr.tobytes()
        entries.append(
            {
                "name": name,
                "dtype": arr.dtype.str,
                "shape": list(arr.shape),
                "offset": offset,
                "nbytes": len(blob),
            }
        )
        blobs.append(blob)
        offset += len(blob)
    header = json.dumps({"arrays": entries, "meta": meta}, sort_keys=True).encode("utf-8")
    with open(path, "wb") as f:
        f.write(_PREFIX.pack(MAGIC, version, len(header)))
        f.write(header)
        for blob in blobs:
            f.write(blob)


def load_archive(path: str | os.PathLike) -> tuple[dict[str, np.ndarray], dict]:
    with open(path, "rb") as f:
        raw = f.read()
    if len(raw) < _PREFIX.size:
        raise CheckpointError(f"truncated archive: {path}")
    magic, version, header_len = _PREFIX.unpack_from(raw, 0)
    if magic != MAGIC:
        raise CheckpointError(f"bad magic {magic!r} in {path}")
    if version != VERSION:
        raise CheckpointError(f"unsupported archive version {version} (expected {VERSION})")
    header_end = _PREFIX.size + header_len
    if len(raw) < header_end:
        raise CheckpointError(f"truncated header in {path}")
    try:
        header = json.loads(raw[_PREFIX.size : header_end].decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise CheckpointError(f"corrupt header in {path}: {exc}") from exc
    payload = raw[header_end:]
    arrays: dict[str, np.ndarray] = {}
    for entry in header["arrays"]:
        start, n = entry["offset"], entry["nbytes"]
        if start + n > len(payload):
            raise CheckpointError(f"array {entry['name']!r} overruns payload in {path}")
        arr = np.frombuffer(payload[start : start + n], dtype=np.dtype(entry["dtype"]))
        arrays[entry["name"]] = arr.reshape(entry["shape"]).copy()
    return arrays, header["meta"]
