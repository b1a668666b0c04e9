"""Per-video feature records and the MARNF binary file format.

Layout (little-endian)::

    b"MARN" | u32 version=1 | u32 id_len | id (UTF-8) | i32 category (-1: none)
    | u32 d | u32 L | u32 c | u32 N | L*d float32 frames | N*c float32 clips
"""

from __future__ import annotations

import struct
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import CorruptionError, FormatError

MAGIC = b"MARN"
VERSION = 1


@dataclass(frozen=True, eq=False)
class VideoFeatures:
    id: str
    f2d: np.ndarray  # L x d frame features
    f3d: np.ndarray  # N x c clip features
    category: int | None = None

    def __post_init__(self):
        f2d = np.asarray(self.f2d, dtype=np.float64)
        f3d = np.asarray(self.f3d, dtype=np.float64)
        if f2d.ndim != 2 or f2d.shape[0] < 1:
            raise FormatError(f"video {self.id!r}: need at least one 2-D frame feature")
        if f3d.ndim != 2 or f3d.shape[0] < 1:
            raise FormatError(f"video {self.id!r}: need at least one 3-D clip feature")
        if not (np.isfinite(f2d).all() and np.isfinite(f3d).all()):
            raise FormatError(f"video {self.id!r}: non-finite feature values")
        if self.category is not None and self.category < 0:
            raise FormatError(f"video {self.id!r}: negative category {self.category}")
        f2d.setflags(write=False)
        f3d.setflags(write=False)
        object.__setattr__(self, "f2d", f2d)
        object.__setattr__(self, "f3d", f3d)

    @property
    def L(self) -> int:
        return self.f2d.shape[0]

    @property
    def N(self) -> int:
        return self.f3d.shape[0]

    @property
    def d(self) -> int:
        return self.f2d.shape[1]

    @property
    def c(self) -> int:
        return self.f3d.shape[1]


def features_to_bytes(v: VideoFeatures) -> bytes:
    vid = v.id.encode("utf-8")
    cat = -1 if v.category is None else int(v.category)
    head = MAGIC + struct.pack("<II", VERSION, len(vid)) + vid
    head += struct.pack("<iIIII", cat, v.d, v.L, v.c, v.N)
    body = v.f2d.astype("<f4").tobytes() + v.f3d.astype("<f4").tobytes()
    return head + body


def features_from_bytes(buf: bytes) -> VideoFeatures:
    if len(buf) < 12 or buf[:4] != MAGIC:
        raise FormatError("not a MARNF feature file (bad magic)")
    version, id_len = struct.unpack_from("<II", buf, 4)
    if version != VERSION:
        raise FormatError(f"unsupported MARNF version {version}")
    pos = 12
    if len(buf) < pos + id_len + 20:
        raise CorruptionError("truncated header", offset=len(buf))
    vid = buf[pos:pos + id_len].decode("utf-8")
    pos += id_len
    cat, d, L, c, N = struct.unpack_from("<iIIII", buf, pos)
    pos += 20
    if L < 1 or N < 1 or d < 1 or c < 1:
        raise FormatError(f"video {vid!r}: empty feature section (d={d}, L={L}, c={c}, N={N})")
    n2, n3 = L * d * 4, N * c * 4
    if len(buf) < pos + n2:
        raise CorruptionError(f"frame payload short: expected {L} rows of {d}", offset=len(buf))
    f2d = np.frombuffer(buf, dtype="<f4", count=L * d, offset=pos).reshape(L, d)
    pos += n2
    if len(buf) < pos + n3:
        raise CorruptionError(f"clip payload short: expected {N} rows of {c}", offset=len(buf))
    f3d = np.frombuffer(buf, dtype="<f4", count=N * c, offset=pos).reshape(N, c)
    pos += n3
    if pos != len(buf):
        raise CorruptionError("trailing bytes after payload", offset=pos)
    return VideoFeatures(vid, f2d.astype(np.float64), f3d.astype(np.float64),
                         None if cat < 0 else cat)


def save_features(path, v: VideoFeatures) -> None:
    Path(path).write_bytes(features_to_bytes(v))


def load_features(path) -> VideoFeatures:
    path = Path(path)
    try:
        buf = path.read_bytes()
    except FileNotFoundError:
        raise FormatError(f"feature file not found: {path}") from None
    return features_from_bytes(buf)
