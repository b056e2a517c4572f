"""Binary tensor container shared by encoders and vulnerability models.

Layout (all integers little-endian)::

    b"DLVA" | u16 version | u32 len | JSON metadata
    u32 tensor count
    per tensor: u16 len | name utf-8 | u8 rank | u32 extents... | f32 data (row-major)
    32-byte SHA-256 of everything above
"""

from __future__ import annotations

import hashlib
import json
import struct
from pathlib import Path

import numpy as np

from .errors import BadMagic, ChecksumMismatch, VersionMismatch

MAGIC = b"DLVA"
VERSION = 1
_DIGEST = 32


def dumps(metadata: dict, tensors: dict[str, np.ndarray]) -> bytes:
    meta = json.dumps(metadata, sort_keys=True, separators=(",", ":")).encode()
    parts = [MAGIC, struct.pack("<HI", VERSION, len(meta)), meta, struct.pack("<I", len(tensors))]
    for name, value in tensors.items():
        raw = name.encode()
        arr = np.asarray(value, dtype="<f4", order="C")  # keeps rank 0, unlike ascontiguousarray
        parts.append(struct.pack("<H", len(raw)) + raw + struct.pack("<B", arr.ndim))
        parts.append(struct.pack(f"<{arr.ndim}I", *arr.shape))
        parts.append(arr.tobytes())
    body = b"".join(parts)
    return body + hashlib.sha256(body).digest()


def loads(blob: bytes) -> tuple[dict, dict[str, np.ndarray]]:
    if blob[:4] != MAGIC:
        raise BadMagic(f"expected {MAGIC!r}, found {blob[:4]!r}")
    body, digest = blob[:-_DIGEST], blob[-_DIGEST:]
    if len(blob) < 4 + 6 + _DIGEST or hashlib.sha256(body).digest() != digest:
        raise ChecksumMismatch("file is truncated or corrupted")
    (version,) = struct.unpack_from("<H", body, 4)
    if version != VERSION:
        raise VersionMismatch(f"format version {version}, expected {VERSION}")
    (meta_len,) = struct.unpack_from("<I", body, 6)
    pos = 10
    metadata = json.loads(body[pos : pos + meta_len])
    pos += meta_len
    (count,) = struct.unpack_from("<I", body, pos)
    pos += 4
    tensors = {}
    for _ in range(count):
        (name_len,) = struct.unpack_from("<H", body, pos)
        name = body[pos + 2 : pos + 2 + name_len].decode()
        pos += 2 + name_len
        rank = body[pos]
        shape = struct.unpack_from(f"<{rank}I", body, pos + 1)
        pos += 1 + 4 * rank
        n = int(np.prod(shape, dtype=np.int64))
        tensors[name] = np.frombuffer(body, dtype="<f4", count=n, offset=pos).reshape(shape).astype(np.float32)
        pos += 4 * n
    return metadata, tensors


def save(path: str | Path, metadata: dict, tensors: dict[str, np.ndarray]) -> None:
    Path(path).write_bytes(dumps(metadata, tensors))


def load(path: str | Path) -> tuple[dict, dict[str, np.ndarray]]:
    return loads(Path(path).read_bytes())
