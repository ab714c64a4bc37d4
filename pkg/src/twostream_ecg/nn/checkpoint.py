"""Parameter checkpoints.

Layout::

    b"ECGCKPT\\0"            8-byte magic
    uint32 LE               format version
    uint64 LE               manifest length in bytes
    manifest                UTF-8 JSON: {"params": [{"name", "shape", "dtype"}...], "meta": {...}}
    payload                 parameters in manifest order, flat little-endian float64
"""
from __future__ import annotations

import json
import os
import struct
import tempfile
from pathlib import Path

import numpy as np

from ..errors import CheckpointError

MAGIC = b"ECGCKPT\0"
VERSION = 1
DTYPE = "<f8"


def dumps(params: dict[str, np.ndarray], meta: dict | None = None) -> bytes:
    entries = []
    chunks = []
    for name, arr in params.items():
        a = np.ascontiguousarray(arr, dtype=DTYPE)
        entries.append({"name": name, "shape": list(a.shape), "dtype": DTYPE})
        chunks.append(a.tobytes())
    manifest = json.dumps({"params": entries, "meta": meta or {}}, sort_keys=True).encode()
    return MAGIC + struct.pack("<IQ", VERSION, len(manifest)) + manifest + b"".join(chunks)


def loads(blob: bytes) -> tuple[dict[str, np.ndarray], dict]:
    if blob[: len(MAGIC)] != MAGIC:
        raise CheckpointError("not a checkpoint (bad magic)")
    off = len(MAGIC)
    version, mlen = struct.unpack_from("<IQ", blob, off)
    if version != VERSION:
        raise CheckpointError(f"unsupported checkpoint version {version}")
    off += 12
    try:
        manifest = json.loads(blob[off : off + mlen].decode())
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise CheckpointError(f"corrupt manifest: {exc}") from None
    off += mlen
    params = {}
    for e in manifest["params"]:
        if e["dtype"] != DTYPE:
            raise CheckpointError(f"unsupported dtype {e['dtype']}")
        n = int(np.prod(e["shape"], dtype=np.int64))
        end = off + 8 * n
        if end > len(blob):
            raise CheckpointError(f"payload truncated in {e['name']}")
        params[e["name"]] = np.frombuffer(blob[off:end], dtype=DTYPE).reshape(e["shape"]).copy()
        off = end
    if off != len(blob):
        raise CheckpointError(f"{len(blob) - off} trailing bytes after payload")
    return params, manifest["meta"]


def atomic_write(path: str | Path, data: bytes | str) -> None:
    """Write via a temp file in the same directory, then rename over ``path``."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    if isinstance(data, str):
        data = data.encode("utf-8")
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.", suffix=".tmp")
    try:
        with os.fdopen(fd, "wb") as fh:
            fh.write(data)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def save(path, params: dict[str, np.ndarray], meta: dict | None = None) -> None:
    atomic_write(path, dumps(params, meta))


def load(path) -> tuple[dict[str, np.ndarray], dict]:
    return loads(Path(path).read_bytes())
