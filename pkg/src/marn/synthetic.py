"""Synthetic captioning data standing in for CNN-extracted video features.

Each video is a short sequence of concept segments.  Every concept owns several
visual prototypes (in both the frame and the clip feature space), so a concept
word is seen under different appearances across videos while any single video
shows only one of them.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .dataset import DatasetManifest, RawCaption, VideoEntry
from .errors import ConfigError
from .features import VideoFeatures, save_features

CONCEPT_WORDS = (
    "dog", "cat", "bird", "car", "ball", "man", "woman", "boat", "tree", "horse",
    "fish", "train", "plane", "guitar", "child", "bike", "cup", "door", "phone", "book",
)
JOINER = "then"


def concept_word(i: int) -> str:
    return CONCEPT_WORDS[i] if i < len(CONCEPT_WORDS) else f"thing{i}"


@dataclass
class SyntheticSpec:
    seed: int = 0
    n_videos: int = 30
    n_concepts: int = 10
    d: int = 16
    c: int = 8
    noise_sigma: float = 0.1
    prototypes: int = 2
    segments: tuple[int, int] = (2, 3)
    frames_per_segment: tuple[int, int] = (2, 4)
    split_counts: tuple[int, int, int] | None = None  # (train, val, test)

    def resolved_splits(self) -> tuple[int, int, int]:
        if self.split_counts is not None:
            tr, va, te = self.split_counts
            if tr + va + te != self.n_videos:
                raise ConfigError("split counts must add up to n_videos")
            return tr, va, te
        va = te = max(1, round(0.15 * self.n_videos))
        return self.n_videos - va - te, va, te


@dataclass
class SyntheticResult:
    manifest: DatasetManifest
    proto2d: np.ndarray  # concepts x prototypes x d
    proto3d: np.ndarray  # concepts x prototypes x c
    segments: dict[str, list[tuple[int, int, int]]]  # video -> [(concept, prototype, frames)]


def generate_synthetic_dataset(out_dir, spec: SyntheticSpec | None = None, **kwargs) -> SyntheticResult:
    """Write feature files and ``manifest.json`` under ``out_dir``.

    Also writes ``truth.json`` with each video's segment assignment, which the
    tests use as an oracle.  Output is byte-identical for identical arguments.
    """
    spec = spec or SyntheticSpec(**kwargs)
    C, P = spec.n_concepts, spec.prototypes
    if C < 4:
        raise ConfigError("need at least 4 concepts")
    if P < 2:
        raise ConfigError("each concept needs at least 2 prototypes")
    if spec.n_videos < C:
        raise ConfigError(f"n_videos ({spec.n_videos}) must be >= n_concepts ({C})")
    lo_seg, hi_seg = spec.segments
    if lo_seg < 2 or hi_seg < lo_seg:
        raise ConfigError("segments must be a range with minimum >= 2")
    n_train, n_val, n_test = spec.resolved_splits()
    if n_train < C:
        raise ConfigError("the train split must hold at least n_concepts videos")

    rng = np.random.default_rng(spec.seed)
    proto2d = rng.normal(size=(C, P, spec.d)).astype(np.float32).astype(np.float64)
    proto3d = rng.normal(size=(C, P, spec.c)).astype(np.float32).astype(np.float64)

    out = Path(out_dir)
    (out / "features").mkdir(parents=True, exist_ok=True)
    videos, captions, truth = [], [], {}
    for i in range(spec.n_videos):
        if i < C:
            # seed videos: concept i under prototype 0, its successor under prototype 1
            segs = [(i, 0), ((i + 1) % C, 1)]
        else:
            n_seg = int(rng.integers(lo_seg, hi_seg + 1))
            segs = []
            prev = -1
            for _ in range(n_seg):
                if prev < 0:
                    concept = int(rng.integers(0, C))
                else:
                    concept = int(rng.integers(0, C - 1))
                    concept += concept >= prev
                segs.append((concept, int(rng.integers(0, P))))
                prev = concept
        frames, clips, layout = [], [], []
        lo_f, hi_f = spec.frames_per_segment
        for concept, proto in segs:
            n_f = int(rng.integers(lo_f, hi_f + 1))
            noise = rng.normal(size=(n_f, spec.d)) * spec.noise_sigma
            frames.append(proto2d[concept, proto] + noise)
            clips.append(proto3d[concept, proto] + rng.normal(size=spec.c) * spec.noise_sigma)
            layout.append((concept, proto, n_f))
        vid = f"vid{i:04d}"
        per_concept: dict[int, int] = {}
        for concept, _, n_f in layout:
            per_concept[concept] = per_concept.get(concept, 0) + n_f
        category = min(per_concept, key=lambda k: (-per_concept[k], k))
        feats = VideoFeatures(vid, np.vstack(frames), np.vstack(clips), category)
        rel = f"features/{vid}.marnf"
        save_features(out / rel, feats)
        split = "train" if i < n_train else ("val" if i < n_train + n_val else "test")
        videos.append(VideoEntry(vid, rel, split))
        captions.append(RawCaption(vid, f" {JOINER} ".join(concept_word(c) for c, _ in segs)))
        truth[vid] = layout

    manifest = DatasetManifest(videos, captions, out)
    manifest.save(out / "manifest.json")
    (out / "truth.json").write_text(
        json.dumps({"segments": truth, "n_concepts": C, "prototypes": P}, indent=1) + "\n",
        encoding="utf-8",
    )
    return SyntheticResult(manifest, proto2d, proto3d, truth)
