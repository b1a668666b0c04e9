"""Dataset manifests (JSON) and their in-memory, tokenized form."""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

from .errors import FormatError
from .features import VideoFeatures, load_features
from .vocab import Vocabulary, build_vocabulary, encode_caption, tokenize

SPLITS = ("train", "val", "test")


@dataclass(frozen=True)
class VideoEntry:
    id: str
    path: str  # relative to the manifest directory
    split: str


@dataclass(frozen=True)
class RawCaption:
    video_id: str
    text: str


@dataclass(frozen=True)
class CaptionSample:
    video_id: str
    token_ids: tuple[int, ...]

    def __post_init__(self):
        if len(self.token_ids) < 3:
            raise FormatError(f"caption for {self.video_id!r} shorter than 3 tokens")


@dataclass
class DatasetManifest:
    videos: list[VideoEntry]
    captions: list[RawCaption]
    root: Path = field(default_factory=Path)

    def __post_init__(self):
        ids = [v.id for v in self.videos]
        if len(set(ids)) != len(ids):
            raise FormatError("manifest lists a video id twice")
        for v in self.videos:
            if v.split not in SPLITS:
                raise FormatError(f"video {v.id!r} has unknown split {v.split!r}")
        known = set(ids)
        for cap in self.captions:
            if cap.video_id not in known:
                raise FormatError(f"caption refers to unknown video {cap.video_id!r}")

    def split_ids(self, split: str) -> list[str]:
        return [v.id for v in self.videos if v.split == split]

    def feature_path(self, video_id: str) -> Path:
        for v in self.videos:
            if v.id == video_id:
                return self.root / v.path
        raise FormatError(f"unknown video {video_id!r}")

    def to_json(self) -> str:
        doc = {
            "format": "marn-manifest",
            "version": 1,
            "videos": [{"id": v.id, "path": v.path, "split": v.split} for v in self.videos],
            "captions": [{"video_id": c.video_id, "caption": c.text} for c in self.captions],
        }
        return json.dumps(doc, indent=1, ensure_ascii=False) + "\n"

    def save(self, path) -> None:
        Path(path).write_text(self.to_json(), encoding="utf-8")

    @classmethod
    def load(cls, path) -> "DatasetManifest":
        path = Path(path)
        try:
            doc = json.loads(path.read_text(encoding="utf-8"))
        except FileNotFoundError:
            raise FormatError(f"manifest not found: {path}") from None
        except json.JSONDecodeError as exc:
            raise FormatError(f"manifest {path} is not valid JSON: {exc}") from None
        try:
            videos = [VideoEntry(v["id"], v["path"], v["split"]) for v in doc["videos"]]
            caps = [RawCaption(c["video_id"], c["caption"]) for c in doc["captions"]]
        except (KeyError, TypeError) as exc:
            raise FormatError(f"manifest {path} is missing field {exc}") from None
        return cls(videos, caps, path.parent)


class Dataset:
    """A manifest with its features loaded and captions encoded against ``vocab``."""

    def __init__(self, manifest: DatasetManifest, vocab: Vocabulary,
                 features: dict[str, VideoFeatures]):
        self.manifest = manifest
        self.vocab = vocab
        self.features = features
        dims = {(f.d, f.c) for f in features.values()}
        if len(dims) > 1:
            raise FormatError(f"feature dimensions differ across videos: {sorted(dims)}")
        self.d, self.c = dims.pop()
        self._split_of = {v.id: v.split for v in manifest.videos}
        self._tokens = [(c.video_id, tokenize(c.text)) for c in manifest.captions]

    @classmethod
    def load(cls, manifest_path, vocab: Vocabulary | None = None, min_count: int = 3) -> "Dataset":
        manifest = DatasetManifest.load(manifest_path)
        feats = {v.id: load_features(manifest.root / v.path) for v in manifest.videos}
        for vid, f in feats.items():
            if f.id != vid:
                raise FormatError(f"feature file for {vid!r} carries id {f.id!r}")
        if vocab is None:
            vocab = vocabulary_for(manifest, min_count)
        return cls(manifest, vocab, feats)

    @property
    def n_categories(self) -> int:
        """Number of categories, or 0 unless every video carries one."""
        cats = [f.category for f in self.features.values()]
        if not cats or any(c is None for c in cats):
            return 0
        return max(cats) + 1

    def video_ids(self, split: str) -> list[str]:
        return self.manifest.split_ids(split)

    def samples(self, split: str) -> list[CaptionSample]:
        return [CaptionSample(vid, tuple(encode_caption(words, self.vocab)))
                for vid, words in self._tokens if self._split_of[vid] == split]

    def references(self, split: str) -> dict[str, list[list[str]]]:
        refs: dict[str, list[list[str]]] = {vid: [] for vid in self.video_ids(split)}
        for vid, words in self._tokens:
            if vid in refs:
                refs[vid].append(words)
        return refs


def vocabulary_for(manifest: DatasetManifest, min_count: int = 3) -> Vocabulary:
    train = set(manifest.split_ids("train"))
    return build_vocabulary(
        (tokenize(c.text) for c in manifest.captions if c.video_id in train), min_count
    )
