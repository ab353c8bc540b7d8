"""Versioned binary checkpoint container.

Layout (little-endian)::

    8s  magic  b"HACGCKPT"
    u16 version
    u32 header length, then that many bytes of UTF-8 JSON
        {"config": {...}, "manifest": {...}}
    u32 parameter count, then per parameter:
        u16 name length, name (UTF-8), u8 ndim, ndim x u32 dims,
        prod(dims) x f32 values (row-major)
"""
from __future__ import annotations

import hashlib
import json
import struct
from pathlib import Path

import numpy as np

MAGIC = b"HACGCKPT"
VERSION = 1


def dumps(params, config: dict, manifest: dict | None = None) -> bytes:
    header = json.dumps({"config": config, "manifest": manifest or {}}, sort_keys=True).encode()
    out = bytearray(MAGIC + struct.pack("<HI", VERSION, len(header)) + header)
    out += struct.pack("<I", len(params))
    for name in sorted(params):
        arr = np.asarray(params[name].data if hasattr(params[name], "data") else params[name])
        encoded = name.encode()
        out += struct.pack("<H", len(encoded)) + encoded
        out += struct.pack("<B", arr.ndim) + struct.pack(f"<{arr.ndim}I", *arr.shape)
        out += arr.astype("<f4").tobytes()
    return bytes(out)


def loads(data: bytes):
    """Return ``(arrays, config, manifest)`` from checkpoint bytes."""
    if data[:8] != MAGIC:
        raise ValueError("not a checkpoint file")
    version, hlen = struct.unpack_from("<HI", data, 8)
    if version != VERSION:
        raise ValueError(f"unsupported checkpoint version {version}")
    pos = 14
    header = json.loads(data[pos:pos + hlen].decode())
    pos += hlen
    (count,) = struct.unpack_from("<I", data, pos)
    pos += 4
    arrays = {}
    for _ in range(count):
        (nlen,) = struct.unpack_from("<H", data, pos)
        pos += 2
        name = data[pos:pos + nlen].decode()
        pos += nlen
        (ndim,) = struct.unpack_from("<B", data, pos)
        pos += 1
        shape = struct.unpack_from(f"<{ndim}I", data, pos)
        pos += 4 * ndim
        size = int(np.prod(shape)) if ndim else 1
        arrays[name] = np.frombuffer(data, "<f4", count=size, offset=pos).reshape(shape).astype(np.float32)
        pos += 4 * size
    if pos != len(data):
        raise ValueError("trailing bytes after checkpoint payload")
    return arrays, header["config"], header["manifest"]


def save(path, params, config, manifest=None):
    Path(path).write_bytes(dumps(params, config, manifest))


def load(path):
    return loads(Path(path).read_bytes())


def digest(data: bytes) -> str:
    return hashlib.sha256(data).hexdigest()[:16]
