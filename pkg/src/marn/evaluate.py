"""Corpus evaluation: decode a split, score it, and write JSON/TSV reports."""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

from .dataset import Dataset
from .decode import Captioner, decode
from .metrics import corpus_scores
from .vocab import decode_tokens


@dataclass
class EvalReport:
    split: str
    lam: float
    beam: int
    scores: dict[str, float]
    videos: list[dict] = field(default_factory=list)  # id, caption, references
    checked_steps: int = 0

    def to_json(self) -> str:
        doc = {
            "split": self.split,
            "lambda": self.lam,
            "beam": self.beam,
            "scores": self.scores,
            "distribution_checks": self.checked_steps,
            "videos": self.videos,
        }
        return json.dumps(doc, indent=1, sort_keys=True) + "\n"

    def to_tsv(self) -> str:
        return "".join(f"{v['id']}\t{v['caption']}\n" for v in self.videos)

    def save(self, path, tsv_path=None) -> None:
        Path(path).write_text(self.to_json(), encoding="utf-8")
        if tsv_path is not None:
            Path(tsv_path).write_text(self.to_tsv(), encoding="utf-8")


def caption_split(dataset: Dataset, split: str, captioner: Captioner, beam: int = 1,
                  max_len: int = 20) -> dict[str, list[str]]:
    return {vid: decode_tokens(decode(dataset.features[vid], captioner, beam, max_len), dataset.vocab)
            for vid in dataset.video_ids(split)}


def evaluate_corpus(dataset: Dataset, split: str, captioner: Captioner, beam: int = 1,
                    max_len: int = 20) -> EvalReport:
    """Decode every video of ``split`` once and compute BLEU-4, ROUGE-L and CIDEr."""
    refs = dataset.references(split)
    cands = caption_split(dataset, split, captioner, beam, max_len)
    scores = corpus_scores(cands, refs)
    videos = [{"id": vid, "caption": " ".join(cands[vid]), "references": [" ".join(r) for r in refs[vid]]}
              for vid in dataset.video_ids(split)]
    return EvalReport(split, captioner.lam, beam, scores, videos, captioner.checked_steps)
