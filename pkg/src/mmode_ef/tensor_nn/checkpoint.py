"""MMCK checkpoint format.

Layout (all integers unsigned 32-bit little-endian)::

    b"MMCK"  version  meta_len  meta_json[meta_len]  n_blocks
    then n_blocks times:
        name_len  name[name_len] (UTF-8)  dtype_tag (u8: 0=float32, 1=float64)
        ndim  dims[ndim]  raw little-endian values (C order)

``meta_json`` is a UTF-8 JSON object describing the architecture so the
model can be rebuilt before the tensors are loaded.
"""

from __future__ import annotations

import hashlib
import io
import json
import struct
from pathlib import Path

import numpy as np

from mmode_ef.errors import FormatError

MAGIC = b"MMCK"
VERSION = 1
_DTYPES = {0: np.dtype("<f4"), 1: np.dtype("<f8")}
_TAGS = {np.dtype(np.float32): 0, np.dtype(np.float64): 1}


def dumps(params: dict[str, np.ndarray], meta: dict | None = None) -> bytes:
    buf = io.BytesIO()
    meta_bytes = json.dumps(meta or {}, sort_keys=True).encode("utf-8")
    buf.write(MAGIC)
    buf.write(struct.pack("<II", VERSION, len(meta_bytes)))
    buf.write(meta_bytes)
    buf.write(struct.pack("<I", len(params)))
    for name, value in params.items():
        value = np.asarray(value)
        if value.dtype not in _TAGS:
            raise TypeError(f"{name}: unsupported dtype {value.dtype}")
        encoded = name.encode("utf-8")
        buf.write(struct.pack("<I", len(encoded)))
        buf.write(encoded)
        buf.write(struct.pack("<BI", _TAGS[value.dtype], value.ndim))
        buf.write(struct.pack(f"<{value.ndim}I", *value.shape))
        buf.write(np.ascontiguousarray(value, dtype=_DTYPES[_TAGS[value.dtype]]).tobytes())
    return buf.getvalue()


def loads(blob: bytes) -> tuple[dict[str, np.ndarray], dict]:
    view = memoryview(blob)
    pos = 0

    def take(n: int) -> memoryview:
        nonlocal pos
        if pos + n > len(view):
            raise FormatError("checkpoint truncated")
        chunk = view[pos : pos + n]
        pos += n
        return chunk

    if bytes(take(4)) != MAGIC:
        raise FormatError("not an MMCK checkpoint (bad magic)")
    version, meta_len = struct.unpack("<II", take(8))
    if version != VERSION:
        raise FormatError(f"unsupported checkpoint version {version}")
    try:
        meta = json.loads(bytes(take(meta_len)).decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise FormatError("checkpoint metadata is not valid JSON") from exc
    (count,) = struct.unpack("<I", take(4))
    params: dict[str, np.ndarray] = {}
    for _ in range(count):
        (name_len,) = struct.unpack("<I", take(4))
        name = bytes(take(name_len)).decode("utf-8")
        tag, ndim = struct.unpack("<BI", take(5))
        if tag not in _DTYPES:
            raise FormatError(f"{name}: unknown dtype tag {tag}")
        shape = struct.unpack(f"<{ndim}I", take(4 * ndim))
        dtype = _DTYPES[tag]
        nbytes = int(np.prod(shape, dtype=np.int64)) * dtype.itemsize
        params[name] = np.frombuffer(take(nbytes), dtype=dtype).reshape(shape).astype(dtype.newbyteorder("="))
    if pos != len(view):
        raise FormatError("trailing bytes after checkpoint blocks")
    return params, meta


def save(path: str | Path, params: dict[str, np.ndarray], meta: dict | None = None) -> str:
    """Write a checkpoint and return the sha256 hex digest of its bytes."""
    blob = dumps(params, meta)
    Path(path).write_bytes(blob)
    return hashlib.sha256(blob).hexdigest()


def load(path: str | Path) -> tuple[dict[str, np.ndarray], dict]:
    return loads(Path(path).read_bytes())


def content_hash(path: str | Path) -> str:
    return hashlib.sha256(Path(path).read_bytes()).hexdigest()


def git_blob_hash(path: str | Path) -> str:
    """SHA-1 of the file as git stores it (``blob <size>\\0`` + bytes)."""
    data = Path(path).read_bytes()
    return hashlib.sha1(b"blob %d\0" % len(data) + data).hexdigest()
