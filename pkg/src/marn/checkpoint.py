"""MARNC parameter containers and the FNV-1a digest that chains pipeline stages.

Layout (little-endian)::

    b"MARNC" | u32 version=1 | u32 n_blocks
    then per block: u32 name_len | name (UTF-8) | u32 rank | rank*u32 extents
                    | prod(extents) float32 values
"""

from __future__ import annotations

import struct
from pathlib import Path
from typing import Mapping

import numpy as np

from .errors import CorruptionError, FormatError

MAGIC = b"MARNC"
VERSION = 1

_FNV_OFFSET = 0xCBF29CE484222325
_FNV_PRIME = 0x100000001B3
_MASK = 0xFFFFFFFFFFFFFFFF


def fnv1a64(data: bytes) -> int:
    h = _FNV_OFFSET
    for byte in data:
        h ^= byte
        h = (h * _FNV_PRIME) & _MASK
    return h


def digest_hex(data: bytes) -> str:
    return f"{fnv1a64(data):016x}"


def checkpoint_bytes(arrays: Mapping[str, np.ndarray]) -> bytes:
    parts = [MAGIC, struct.pack("<II", VERSION, len(arrays))]
    for name, arr in arrays.items():
        arr = np.asarray(arr)
        raw = name.encode("utf-8")
        parts.append(struct.pack("<I", len(raw)) + raw)
        parts.append(struct.pack(f"<I{arr.ndim}I", arr.ndim, *arr.shape))
        parts.append(np.ascontiguousarray(arr, dtype="<f4").tobytes())
    return b"".join(parts)


def parse_checkpoint(buf: bytes) -> dict[str, np.ndarray]:
    """Inverse of :func:`checkpoint_bytes`; values come back as float64."""
    if buf[:5] != MAGIC:
        raise FormatError("not a MARNC checkpoint (bad magic)")
    if len(buf) < 13:
        raise CorruptionError("truncated checkpoint header", offset=len(buf))
    version, count = struct.unpack_from("<II", buf, 5)
    if version != VERSION:
        raise FormatError(f"unsupported MARNC version {version}")
    pos = 13
    out: dict[str, np.ndarray] = {}
    try:
        for _ in range(count):
            (n,) = struct.unpack_from("<I", buf, pos)
            pos += 4
            name = buf[pos:pos + n].decode("utf-8")
            if len(name.encode("utf-8")) != n:
                raise CorruptionError("truncated block name", offset=pos)
            pos += n
            (rank,) = struct.unpack_from("<I", buf, pos)
            pos += 4
            shape = struct.unpack_from(f"<{rank}I", buf, pos)
            pos += 4 * rank
            size = int(np.prod(shape)) if rank else 1
            if len(buf) < pos + 4 * size:
                raise CorruptionError(f"payload of block {name!r} truncated", offset=len(buf))
            arr = np.frombuffer(buf, dtype="<f4", count=size, offset=pos).reshape(shape)
            out[name] = arr.astype(np.float64)
            pos += 4 * size
    except struct.error:
        raise CorruptionError("truncated block header", offset=pos) from None
    if pos != len(buf):
        raise CorruptionError("trailing bytes after last block", offset=pos)
    return out


def save_checkpoint(path, arrays: Mapping[str, np.ndarray]) -> str:
    """Write a checkpoint and return its digest (hex string)."""
    data = checkpoint_bytes(arrays)
    Path(path).write_bytes(data)
    return digest_hex(data)


def load_checkpoint(path) -> tuple[dict[str, np.ndarray], str]:
    path = Path(path)
    try:
        data = path.read_bytes()
    except FileNotFoundError:
        raise FormatError(f"checkpoint not found: {path}") from None
    return parse_checkpoint(data), digest_hex(data)
