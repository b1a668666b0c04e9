"""Per-word memory built from a trained basis decoder.

Each vocabulary word ``r`` maps to a visual context ``g_r`` (attention-weighted
top-k projected features pooled over every training occurrence of the word),
its learned embedding ``e_r`` and an auxiliary category histogram ``u_r``.

MARNM layout (little-endian)::

    b"MARNM" | u32 version=1 | u64 basis checkpoint digest | u32 K, m, emb, U, k
    then per word: u32 occurrence_count | m f32 (g) | emb f32 (e) | U f32 (u)
"""

from __future__ import annotations

import logging
import struct
from dataclasses import dataclass
from pathlib import Path
from typing import Sequence

import numpy as np

from .basis import BasisModel, forward_teacher_forced, project_features
from .dataset import Dataset
from .errors import ContractError, CorruptionError, FormatError
from .vocab import BOS_ID, PAD_ID

log = logging.getLogger(__name__)

MAGIC = b"MARNM"
VERSION = 1


@dataclass(frozen=True)
class AttentionRecord:
    word_id: int
    video_id: str
    weights2d: np.ndarray
    weights3d: np.ndarray


@dataclass(frozen=True)
class MemoryEntry:
    word_id: int
    g: np.ndarray
    e: np.ndarray
    u: np.ndarray
    occurrence_count: int


@dataclass(eq=False)
class MemoryBank:
    """Memory stored column-wise: row ``r`` of each array belongs to word ``r``."""

    g: np.ndarray  # K x m
    e: np.ndarray  # K x emb
    u: np.ndarray  # K x U (U may be 0)
    counts: np.ndarray  # K
    k: int
    basis_digest: str = "0" * 16

    def __post_init__(self):
        K = self.g.shape[0]
        if not (self.e.shape[0] == self.u.shape[0] == self.counts.shape[0] == K):
            raise FormatError("memory arrays disagree on vocabulary size")
        if self.k < 1:
            raise ContractError("memory top-k must be >= 1")

    @property
    def K(self) -> int:
        return self.g.shape[0]

    @property
    def U(self) -> int:
        return self.u.shape[1]

    def entry(self, r: int) -> MemoryEntry:
        return MemoryEntry(r, self.g[r], self.e[r], self.u[r], int(self.counts[r]))

    @property
    def entries(self) -> list[MemoryEntry]:
        return [self.entry(r) for r in range(self.K)]

    def to_bytes(self) -> bytes:
        K, m = self.g.shape
        emb, U = self.e.shape[1], self.u.shape[1]
        head = MAGIC + struct.pack("<IQIIIII", VERSION, int(self.basis_digest, 16), K, m, emb, U, self.k)
        rows = []
        for r in range(K):
            rows.append(struct.pack("<I", int(self.counts[r])))
            rows.append(np.concatenate([self.g[r], self.e[r], self.u[r]]).astype("<f4").tobytes())
        return head + b"".join(rows)

    @classmethod
    def from_bytes(cls, buf: bytes) -> "MemoryBank":
        if buf[:5] != MAGIC:
            raise FormatError("not a MARNM memory file (bad magic)")
        hsize = 5 + struct.calcsize("<IQIIIII")
        if len(buf) < hsize:
            raise CorruptionError("truncated memory header", offset=len(buf))
        version, digest, K, m, emb, U, k = struct.unpack_from("<IQIIIII", buf, 5)
        if version != VERSION:
            raise FormatError(f"unsupported MARNM version {version}")
        row = 4 + 4 * (m + emb + U)
        if len(buf) != hsize + K * row:
            raise CorruptionError(f"expected {K} memory rows of {row} bytes", offset=len(buf))
        counts = np.empty(K, dtype=np.int64)
        vals = np.empty((K, m + emb + U))
        pos = hsize
        for r in range(K):
            (counts[r],) = struct.unpack_from("<I", buf, pos)
            vals[r] = np.frombuffer(buf, dtype="<f4", count=m + emb + U, offset=pos + 4)
            pos += row
        return cls(vals[:, :m].copy(), vals[:, m:m + emb].copy(), vals[:, m + emb:].copy(),
                   counts, k, f"{digest:016x}")

    def save(self, path) -> None:
        Path(path).write_bytes(self.to_bytes())

    @classmethod
    def load(cls, path) -> "MemoryBank":
        path = Path(path)
        try:
            return cls.from_bytes(path.read_bytes())
        except FileNotFoundError:
            raise FormatError(f"memory file not found: {path}") from None


def collect_attention_records(model: BasisModel, dataset: Dataset, split: str = "train") -> list[AttentionRecord]:
    """One record per predicted token of every caption in ``split``, in manifest order."""
    records = []
    for sample in dataset.samples(split):
        video = dataset.features.get(sample.video_id)
        if video is None:
            raise FormatError(f"caption refers to unloaded video {sample.video_id!r}")
        tf = forward_teacher_forced(video, sample.token_ids, model)
        for t, word in enumerate(tf.targets):
            if word in (PAD_ID, BOS_ID):
                continue
            records.append(AttentionRecord(int(word), sample.video_id,
                                           tf.a2d.data[t].copy(), tf.a3d.data[t].copy()))
    return records


def top_k(weights: np.ndarray, k: int) -> np.ndarray:
    """Indices of the ``k`` largest weights, descending; ties go to the lower index."""
    order = np.argsort(-weights, kind="stable")
    return order[:k]


def build_visual_context(records: Sequence[AttentionRecord], projected: dict[str, tuple[np.ndarray, np.ndarray]],
                         k: int, m: int | None = None, quiet: bool = False) -> np.ndarray:
    """Weight-normalised pool of the top-k attended features over all occurrences.

    ``projected`` maps a video id to its projected ``(frames, clips)`` arrays.
    Each stream is divided by its own accumulated weight mass.  Words without
    records get a zero vector of width ``m``.
    """
    if k < 1:
        raise ContractError("k must be >= 1")
    if not records:
        if m is None:
            raise ContractError("width m is required when there are no records")
        return np.zeros(m)
    num2 = num3 = 0.0
    den2 = den3 = 0.0
    warned = False
    for rec in records:
        f2, f3 = projected[rec.video_id]
        for w, feats, stream in ((rec.weights2d, f2, 2), (rec.weights3d, f3, 3)):
            kk = k
            if k > len(w):
                kk = len(w)
                if not (warned or quiet):
                    log.warning("top-k %d exceeds %d available features; truncating", k, len(w))
                    warned = True
            num = np.zeros(feats.shape[1])
            den = 0.0
            for j in top_k(w, kk):
                num = num + w[j] * feats[j]
                den += w[j]
            if stream == 2:
                num2, den2 = num2 + num, den2 + den
            else:
                num3, den3 = num3 + num, den3 + den
    return num2 / den2 + num3 / den3


def build_auxiliary(records: Sequence[AttentionRecord], categories: dict[str, int | None], n_categories: int) -> np.ndarray:
    """Occurrence-weighted, normalised histogram of the categories a word appears in."""
    u = np.zeros(n_categories)
    if n_categories == 0 or not records:
        return u
    for rec in records:
        cat = categories[rec.video_id]
        if cat is None:
            raise FormatError(f"video {rec.video_id!r} has no category")
        u[cat] += 1.0
    return u / u.sum()


def assemble_memory(model: BasisModel, dataset: Dataset, k: int = 3,
                    basis_digest: str = "0" * 16, split: str = "train") -> MemoryBank:
    records = collect_attention_records(model, dataset, split)
    by_word: dict[int, list[AttentionRecord]] = {}
    for rec in records:
        by_word.setdefault(rec.word_id, []).append(rec)
    projected = {}
    for vid in {r.video_id for r in records}:
        f2, f3 = project_features(dataset.features[vid], model.enc)
        projected[vid] = (f2.data, f3.data)
    shortest = min((min(len(a), len(b)) for a, b in projected.values()), default=k)
    if k > shortest:
        log.warning("top-k %d exceeds the %d features of the shortest stream; truncating", k, shortest)
    dims = model.dims
    K, U = dims.K, dataset.n_categories
    categories = {vid: f.category for vid, f in dataset.features.items()}
    g = np.zeros((K, dims.m))
    u = np.zeros((K, U))
    counts = np.zeros(K, dtype=np.int64)
    for r in range(K):
        recs = by_word.get(r, [])
        counts[r] = len(recs)
        g[r] = build_visual_context(recs, projected, k, dims.m, quiet=True)
        u[r] = build_auxiliary(recs, categories, U)
    e = model.dec.E.data.T.copy()
    return MemoryBank(g, e, u, counts, k, basis_digest)
