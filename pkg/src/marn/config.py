"""Run configuration: a JSON file merged with command-line overrides."""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path

from .errors import ConfigError
from .synthetic import SyntheticSpec
from .training import TrainConfig


@dataclass
class RunConfig:
    data: str = ""  # manifest path
    out: str = "run"
    seed: int = 0
    min_count: int = 3
    dims: tuple[int, int, int, int] = (64, 64, 64, 64)  # m, H, A, emb
    memory_width: int | None = None  # scorer width A'; defaults to A
    k: int = 3
    lam: float | None = None  # None: tune on the validation split
    beam: int = 1
    memory_epochs: int | None = None  # defaults to train.epochs
    train: TrainConfig = field(default_factory=TrainConfig)
    synth: SyntheticSpec = field(default_factory=SyntheticSpec)

    def __post_init__(self):
        self.dims = tuple(int(x) for x in self.dims)
        if len(self.dims) != 4 or min(self.dims) < 1:
            raise ConfigError(f"dims must be four positive integers m,H,A,emb; got {self.dims}")
        if self.k < 1:
            raise ConfigError("k must be >= 1")
        if self.beam < 1:
            raise ConfigError("beam must be >= 1")
        if self.lam is not None and not 0.0 <= self.lam <= 1.0:
            raise ConfigError(f"lambda must lie in [0, 1], got {self.lam}")
        if self.min_count < 1:
            raise ConfigError("min_count must be >= 1")

    def to_json(self) -> str:
        return json.dumps(asdict(self), indent=1, sort_keys=True) + "\n"

    @classmethod
    def from_dict(cls, doc: dict) -> "RunConfig":
        doc = dict(doc)
        known = {f.name for f in fields(cls)}
        unknown = set(doc) - known
        if unknown:
            raise ConfigError(f"unknown config keys {sorted(unknown)}")
        try:
            if "train" in doc:
                doc["train"] = TrainConfig(**doc["train"])
            if "synth" in doc:
                synth = dict(doc["synth"])
                for key in ("segments", "frames_per_segment", "split_counts"):
                    if synth.get(key) is not None:
                        synth[key] = tuple(synth[key])
                doc["synth"] = SyntheticSpec(**synth)
            return cls(**doc)
        except TypeError as exc:
            raise ConfigError(f"bad config: {exc}") from None

    @classmethod
    def load(cls, path) -> "RunConfig":
        try:
            doc = json.loads(Path(path).read_text(encoding="utf-8"))
        except FileNotFoundError:
            raise ConfigError(f"config file not found: {path}") from None
        except json.JSONDecodeError as exc:
            raise ConfigError(f"config {path} is not valid JSON: {exc}") from None
        return cls.from_dict(doc)
