"""The two-stage pipeline as file-to-file stages sharing one run directory.

Artifacts in ``cfg.out``:

    vocab.txt, basis.marnc, basis_report.json     (train-basis)
    memory.marnm                                  (build-memory)
    memdec.marnc, memdec_report.json              (train-memory)
    eval_report.json, captions.tsv                (eval / caption)
    run_config.json, digests.json                 (every stage)

``digests.json`` chains the stages: the memory records the basis digest it was
built from and the memory-decoder report records the memory digest, so a stage
refuses inputs produced from a different upstream artifact.
"""

from __future__ import annotations

import json
import logging
from dataclasses import dataclass, replace
from pathlib import Path

from .basis import BasisModel, ModelDims
from .checkpoint import digest_hex, load_checkpoint, save_checkpoint
from .config import RunConfig
from .dataset import Dataset
from .decode import Captioner
from .errors import DigestMismatchError, FormatError
from .evaluate import caption_split, evaluate_corpus
from .memdec import MemoryDecoderParams
from .memory import MemoryBank, assemble_memory
from .synthetic import generate_synthetic_dataset
from .training import select_lambda, train_basis, train_memory_decoder
from .vocab import Vocabulary

log = logging.getLogger(__name__)


def _write_common(cfg: RunConfig, **digests) -> None:
    out = Path(cfg.out)
    out.mkdir(parents=True, exist_ok=True)
    (out / "run_config.json").write_text(cfg.to_json(), encoding="utf-8")
    path = out / "digests.json"
    chain = json.loads(path.read_text(encoding="utf-8")) if path.exists() else {}
    chain.update(digests)
    chain["seed"] = cfg.seed
    path.write_text(json.dumps(chain, indent=1, sort_keys=True) + "\n", encoding="utf-8")


def _train_config(cfg: RunConfig, epochs: int | None = None):
    return replace(cfg.train, seed=cfg.seed, epochs=epochs or cfg.train.epochs)


def _dataset(cfg: RunConfig, vocab: Vocabulary | None = None) -> Dataset:
    if not cfg.data:
        raise FormatError("no dataset manifest given (use --data or the config's 'data')")
    return Dataset.load(cfg.data, vocab=vocab, min_count=cfg.min_count)


def synth(cfg: RunConfig) -> Path:
    spec = replace(cfg.synth, seed=cfg.seed)
    generate_synthetic_dataset(cfg.out, spec)
    return Path(cfg.out) / "manifest.json"


def train_basis_stage(cfg: RunConfig):
    out = Path(cfg.out)
    out.mkdir(parents=True, exist_ok=True)
    ds = _dataset(cfg)
    ds.vocab.save(out / "vocab.txt")
    m, H, A, emb = cfg.dims
    dims = ModelDims(d=ds.d, c=ds.c, K=len(ds.vocab), m=m, H=H, A=A, emb=emb)
    result = train_basis(ds, _train_config(cfg), dims)
    digest = save_checkpoint(out / "basis.marnc", result.model.arrays())
    result.report.extra["checkpoint_digest"] = digest
    (out / "basis_report.json").write_text(result.report.to_json(), encoding="utf-8")
    _write_common(cfg, basis=digest)
    return result, digest


@dataclass
class LoadedRun:
    dataset: Dataset
    basis: BasisModel
    basis_digest: str
    memory: MemoryBank | None = None
    memory_digest: str | None = None
    memdec: MemoryDecoderParams | None = None
    tuned_lambda: float | None = None


def load_run(cfg: RunConfig, need_memory: bool = False, need_memdec: bool = False,
             upstream_only: bool = False) -> LoadedRun:
    """Load the run's artifacts, verifying the digest chain.

    Memory and memory decoder are loaded when required or, unless
    ``upstream_only``, whenever they exist.
    """
    out = Path(cfg.out)
    vocab_path = out / "vocab.txt"
    if not vocab_path.exists():
        raise FormatError(f"vocabulary not found: {vocab_path} (run train-basis first)")
    ds = _dataset(cfg, Vocabulary.load(vocab_path))
    arrays, bdigest = load_checkpoint(out / "basis.marnc")
    run = LoadedRun(ds, BasisModel.from_arrays(arrays), bdigest)
    mem_path = out / "memory.marnm"
    if need_memory or need_memdec or (mem_path.exists() and not upstream_only):
        if not mem_path.exists():
            raise FormatError(f"memory file not found: {mem_path}")
        data = mem_path.read_bytes()
        run.memory = MemoryBank.from_bytes(data)
        run.memory_digest = digest_hex(data)
        if run.memory.basis_digest != bdigest:
            raise DigestMismatchError(
                f"{mem_path} was built from basis {run.memory.basis_digest}, current basis is {bdigest}"
            )
    md_path = out / "memdec.marnc"
    if need_memdec or (md_path.exists() and run.memory is not None and not upstream_only):
        arrays, _ = load_checkpoint(md_path)
        report = json.loads((out / "memdec_report.json").read_text(encoding="utf-8"))
        if report["extra"].get("memory_digest") != run.memory_digest:
            raise DigestMismatchError("memory decoder was trained against a different memory file")
        run.memdec = MemoryDecoderParams.from_arrays(arrays)
        run.tuned_lambda = report["extra"].get("lambda")
    return run


def build_memory_stage(cfg: RunConfig) -> MemoryBank:
    run = load_run(cfg, upstream_only=True)
    memory = assemble_memory(run.basis, run.dataset, cfg.k, run.basis_digest)
    data = memory.to_bytes()
    (Path(cfg.out) / "memory.marnm").write_bytes(data)
    _write_common(cfg, memory=digest_hex(data))
    return memory


def train_memory_stage(cfg: RunConfig):
    run = load_run(cfg, need_memory=True, upstream_only=True)
    tc = _train_config(cfg, cfg.memory_epochs)
    result = train_memory_decoder(run.dataset, run.basis, run.basis_digest, run.memory, tc, cfg.memory_width)
    out = Path(cfg.out)
    digest = save_checkpoint(out / "memdec.marnc", result.params.arrays())
    # reload at file precision so the tuned lambda matches what later stages see
    params = MemoryDecoderParams.from_arrays(load_checkpoint(out / "memdec.marnc")[0])
    lam, table = select_lambda(run.dataset, run.basis, params, run.memory, max_len=tc.max_len, beam=cfg.beam)
    result.report.extra.update(
        checkpoint_digest=digest, memory_digest=run.memory_digest, basis_digest=run.basis_digest,
        **{"lambda": lam, "lambda_table": {f"{k:.1f}": v for k, v in table.items()}},
    )
    (out / "memdec_report.json").write_text(result.report.to_json(), encoding="utf-8")
    _write_common(cfg, memdec=digest)
    return result, lam


def _captioner(cfg: RunConfig, run: LoadedRun, check: bool = False) -> Captioner:
    if run.memdec is None:
        return Captioner(run.basis, check=check)
    lam = cfg.lam if cfg.lam is not None else (run.tuned_lambda or 0.0)
    return Captioner(run.basis, run.memdec, run.memory, lam=lam, check=check)


def caption_stage(cfg: RunConfig, split: str = "test") -> dict[str, list[str]]:
    run = load_run(cfg)
    caps = caption_split(run.dataset, split, _captioner(cfg, run), cfg.beam, cfg.train.max_len)
    lines = "".join(f"{vid}\t{' '.join(words)}\n" for vid, words in caps.items())
    (Path(cfg.out) / "captions.tsv").write_text(lines, encoding="utf-8")
    return caps


def eval_stage(cfg: RunConfig, split: str = "test"):
    run = load_run(cfg)
    report = evaluate_corpus(run.dataset, split, _captioner(cfg, run, check=True), cfg.beam, cfg.train.max_len)
    out = Path(cfg.out)
    report.save(out / "eval_report.json", out / "captions.tsv")
    _write_common(cfg)
    return report
