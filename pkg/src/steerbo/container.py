"""Flat binary container: MAGIC | u32 version | u64 manifest length |
manifest JSON | little-endian float64 arrays in manifest order."""

from __future__ import annotations

import io
import json
import math
import struct
from pathlib import Path

import numpy as np

MAGIC = b"STBOWGT\0"
FORMAT_VERSION = 1
_HEAD = "<IQ"


def write_container(path: str | Path, manifest: dict, arrays: list[tuple[str, np.ndarray]]) -> None:
    manifest = dict(manifest)
    manifest["arrays"] = [{"name": n, "shape": list(np.shape(v))} for n, v in arrays]
    blob = json.dumps(manifest, sort_keys=True).encode()
    buf = io.BytesIO()
    buf.write(MAGIC)
    buf.write(struct.pack(_HEAD, FORMAT_VERSION, len(blob)))
    buf.write(blob)
    for _, v in arrays:
        buf.write(np.ascontiguousarray(v, dtype="<f8").tobytes())
    Path(path).write_bytes(buf.getvalue())


def read_container(path: str | Path) -> tuple[dict, dict[str, np.ndarray]]:
    data = Path(path).read_bytes()
    if not data.startswith(MAGIC):
        raise ValueError(f"{path}: not a steerbo container")
    off = len(MAGIC)
    version, n = struct.unpack_from(_HEAD, data, off)
    if version != FORMAT_VERSION:
        raise ValueError(f"{path}: unsupported format version {version}")
    off += struct.calcsize(_HEAD)
    manifest = json.loads(data[off:off + n])
    off += n
    arrays = {}
    for entry in manifest["arrays"]:
        count = math.prod(entry["shape"])
        if off + 8 * count > len(data):
            raise ValueError(f"{path}: truncated array {entry['name']}")
        arrays[entry["name"]] = np.frombuffer(data, "<f8", count, off).reshape(entry["shape"]).copy()
        off += 8 * count
    if off != len(data):
        raise ValueError(f"{path}: trailing bytes after the last array")
    return manifest, arrays
