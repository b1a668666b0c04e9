"""Losses and the two training stages (basis decoder, then memory decoder)."""

from __future__ import annotations

import json
import logging
from dataclasses import asdict, dataclass, field
from typing import Callable, Sequence

import numpy as np

from .basis import BasisModel, ModelDims, forward_teacher_forced
from .dataset import CaptionSample, Dataset
from .decode import Captioner, decode
from .errors import ConfigError, ContractError, DigestMismatchError, NumericalError
from .memdec import MemoryDecoderParams, memory_probabilities, relevance_scores
from .memory import MemoryBank
from .metrics import cider
from .optim import AdamState, adam_step, step_decay
from .tensor import Tensor, Tape, absolute, backward, clamp_min, getitem, log, scale, tsum
from .vocab import decode_tokens

log_ = logging.getLogger(__name__)

PROB_FLOOR = 1e-12


@dataclass
class TrainConfig:
    epochs: int = 500
    base_lr: float = 1e-3
    lr_decay: float = 0.5
    decay_every: int = 50
    clip: tuple[float, float] = (-5.0, 5.0)
    beta: float = 0.1
    batch_size: int = 16
    seed: int = 0
    eval_every: int = 10
    max_len: int = 20

    def __post_init__(self):
        self.clip = tuple(self.clip)
        if self.epochs < 1 or self.batch_size < 1:
            raise ConfigError("epochs and batch_size must be positive")
        if self.decay_every < 1:
            raise ConfigError("decay_every must be >= 1")
        if self.beta < 0:
            raise ConfigError("beta must be non-negative")
        if not self.base_lr > 0:
            raise ConfigError("base_lr must be positive")
        if self.eval_every < 1:
            raise ConfigError("eval_every must be >= 1")


@dataclass
class TrainReport:
    epochs: list[dict] = field(default_factory=list)
    selected_epoch: int = 0
    selected_metric: float = float("-inf")
    extra: dict = field(default_factory=dict)

    def to_json(self) -> str:
        return json.dumps(asdict(self), indent=1, sort_keys=True) + "\n"


# ---------------------------------------------------------------------------
# losses


def caption_nll(probs: Tensor, targets: Sequence[int], clamp: bool = True) -> Tensor:
    """Negative log-likelihood of ``targets`` summed over steps (natural log).

    Probabilities at or below 1e-12 are clamped (with a warning) unless
    ``clamp`` is off.
    """
    targets = np.asarray(targets, dtype=np.int64)
    if probs.shape[0] != len(targets):
        raise ContractError(f"{probs.shape[0]} prediction steps for {len(targets)} targets")
    picked = getitem(probs, (np.arange(len(targets)), targets))
    if clamp:
        if (picked.data <= PROB_FLOOR).any():
            log_.warning("target probability below %g clamped", PROB_FLOOR)
        picked = clamp_min(picked, PROB_FLOOR)
    return -tsum(log(picked))


def attention_coherent_loss(a2d: Tensor) -> Tensor:
    """Sum over steps and frames of ``|a[t, i] - a[t, i-1]|`` (frame stream only)."""
    if a2d.ndim != 2:
        raise ContractError("attention map must be steps x frames")
    if a2d.shape[1] < 2:
        return Tensor(0.0)
    diff = getitem(a2d, (slice(None), slice(1, None))) - getitem(a2d, (slice(None), slice(None, -1)))
    return tsum(absolute(diff))


def combined_loss(l_c: Tensor, l_a: Tensor, beta: float) -> Tensor:
    if beta < 0:
        raise ContractError("beta must be non-negative")
    return l_c + scale(l_a, beta)


def basis_loss(model: BasisModel, dataset: Dataset, samples: Sequence[CaptionSample], beta: float):
    """Batch-averaged combined loss; returns ``(total, mean L_c, mean L_a)`` tensors/floats."""
    total = None
    lc_sum = la_sum = 0.0
    for s in samples:
        tf = forward_teacher_forced(dataset.features[s.video_id], s.token_ids, model)
        l_c = caption_nll(tf.probs, tf.targets)
        l_a = attention_coherent_loss(tf.a2d)
        loss = combined_loss(l_c, l_a, beta)
        total = loss if total is None else total + loss
        lc_sum += l_c.item()
        la_sum += l_a.item()
    n = len(samples)
    return scale(total, 1.0 / n), lc_sum / n, la_sum / n


@dataclass
class FrozenSteps:
    """Basis-decoder step inputs for the memory decoder, precomputed once."""

    c: np.ndarray  # steps x 2m
    e_prev: np.ndarray  # steps x emb
    h_prev: np.ndarray  # steps x H
    targets: np.ndarray


def frozen_steps(basis: BasisModel, dataset: Dataset, sample: CaptionSample) -> FrozenSteps:
    tf = forward_teacher_forced(dataset.features[sample.video_id], sample.token_ids, basis)
    return FrozenSteps(
        np.stack([s.c_t.data for s in tf.steps]),
        np.stack([s.e_prev.data for s in tf.steps]),
        np.stack([s.h_prev.data for s in tf.steps]),
        tf.targets,
    )


def memory_loss(memdec: MemoryDecoderParams, memory: MemoryBank, batch: Sequence[FrozenSteps]) -> Tensor:
    """Batch-averaged ``-sum_t log P_m(w_t)`` with basis outputs and memory held constant."""
    c = np.concatenate([b.c for b in batch])
    e = np.concatenate([b.e_prev for b in batch])
    h = np.concatenate([b.h_prev for b in batch])
    targets = np.concatenate([b.targets for b in batch])
    q = relevance_scores(c, e, h, memory, memdec)
    return scale(caption_nll(memory_probabilities(q), targets), 1.0 / len(batch))


# ---------------------------------------------------------------------------
# training loops


def _first_nonfinite(params: dict[str, Tensor], grads: dict[str, np.ndarray]) -> str:
    for name, p in params.items():
        if not np.isfinite(p.data).all():
            return f"parameter {name}"
    for name, g in grads.items():
        if not np.isfinite(g).all():
            return f"gradient of {name}"
    return "loss value only"


def _optimize(params: dict[str, Tensor], batches: Callable[[np.random.Generator], list],
              loss_fn: Callable[[list], tuple], config: TrainConfig,
              validate: Callable[[], float], on_epoch=None) -> TrainReport:
    """Shared epoch loop: Adam with clipping, step decay, validation-based selection."""
    state = AdamState(learning_rate=config.base_lr)
    rng = np.random.default_rng(config.seed)
    report = TrainReport()
    best = None
    tensors = list(params.values())
    for epoch in range(1, config.epochs + 1):
        state.learning_rate = step_decay(epoch, config.base_lr, config.lr_decay, config.decay_every)
        sums: dict[str, float] = {}
        n_steps = n_seen = 0
        for batch in batches(rng):
            with Tape() as tape:
                loss, parts = loss_fn(batch)
            value = loss.item()
            grads_t = backward(loss, tape, tensors)
            grads = {name: grads_t[p] for name, p in params.items()}
            if not np.isfinite(value) or not all(np.isfinite(g).all() for g in grads.values()):
                raise NumericalError(
                    f"non-finite loss at epoch {epoch}: first offender {_first_nonfinite(params, grads)}"
                )
            adam_step(state, params, grads, config.clip)
            n_steps += 1
            n_seen += len(batch)
            for key, val in {"loss": value, **parts}.items():
                sums[key] = sums.get(key, 0.0) + val * len(batch)
        bad = [name for name, p in params.items() if not np.isfinite(p.data).all()]
        if bad:
            raise NumericalError(f"parameter {bad[0]} became non-finite at epoch {epoch}")
        rec = {"epoch": epoch, "lr": state.learning_rate, "steps": n_steps}
        rec.update({key: val / n_seen for key, val in sums.items()})
        if epoch % config.eval_every == 0 or epoch == config.epochs:
            metric = validate()
            rec["val_cider"] = metric
            if metric >= report.selected_metric:
                report.selected_epoch, report.selected_metric = epoch, metric
                best = {k: p.data.copy() for k, p in params.items()}
        report.epochs.append(rec)
        if on_epoch is not None:
            on_epoch(epoch, rec)
    report.extra["best_arrays"] = best
    return report


def _batches_of(items: list, batch_size: int):
    def make(rng: np.random.Generator):
        order = rng.permutation(len(items))
        return [[items[i] for i in order[j:j + batch_size]] for j in range(0, len(items), batch_size)]
    return make


def validation_cider(dataset: Dataset, captioner: Captioner, split: str = "val",
                     max_len: int = 20, beam: int = 1) -> float:
    refs = dataset.references(split)
    cands = {vid: decode_tokens(decode(dataset.features[vid], captioner, beam, max_len), dataset.vocab)
             for vid in refs}
    return cider(cands, refs)


@dataclass
class BasisTrainResult:
    model: BasisModel  # best on validation
    last: BasisModel
    report: TrainReport


def train_basis(dataset: Dataset, config: TrainConfig, dims: ModelDims | None = None,
                on_epoch=None) -> BasisTrainResult:
    """Minimise ``L_c + beta * L_a`` over the train split; keep the best-on-validation weights."""
    samples = dataset.samples("train")
    if not samples or not dataset.video_ids("val"):
        raise ContractError("training needs non-empty train and val splits")
    if dims is None:
        dims = ModelDims(d=dataset.d, c=dataset.c, K=len(dataset.vocab))
    model = BasisModel.init(dims, config.seed)
    params = model.named_parameters()

    def loss_fn(batch):
        total, lc, la = basis_loss(model, dataset, batch, config.beta)
        return total, {"L_c": lc, "L_a": la}

    def validate():
        return validation_cider(dataset, Captioner(model), max_len=config.max_len)

    report = _optimize(params, _batches_of(samples, config.batch_size), loss_fn, config, validate, on_epoch)
    best = BasisModel.from_arrays(report.extra.pop("best_arrays"), dims)
    return BasisTrainResult(best, model, report)


@dataclass
class MemoryTrainResult:
    params: MemoryDecoderParams
    last: MemoryDecoderParams
    report: TrainReport


def train_memory_decoder(dataset: Dataset, basis: BasisModel, basis_digest: str, memory: MemoryBank,
                         config: TrainConfig, width: int | None = None, on_epoch=None) -> MemoryTrainResult:
    """Fit the memory decoder on ``-sum log P_m`` with the basis decoder and memory frozen.

    Refuses to train when the memory was built from a different basis checkpoint.
    """
    if memory.basis_digest != basis_digest:
        raise DigestMismatchError(
            f"memory was built from basis {memory.basis_digest}, not {basis_digest}"
        )
    dims = basis.dims
    if memory.K != dims.K:
        raise ContractError(f"memory holds {memory.K} words, vocabulary has {dims.K}")
    samples = dataset.samples("train")
    if not samples or not dataset.video_ids("val"):
        raise ContractError("training needs non-empty train and val splits")
    frozen = [frozen_steps(basis, dataset, s) for s in samples]
    memdec = MemoryDecoderParams.init(width or dims.A, dims.m, dims.emb, dims.H, memory.U, config.seed)
    params = memdec.named_parameters()

    def loss_fn(batch):
        return memory_loss(memdec, memory, batch), {}

    def validate():
        return validation_cider(dataset, Captioner(basis, memdec, memory, lam=1.0), max_len=config.max_len)

    report = _optimize(params, _batches_of(frozen, config.batch_size), loss_fn, config, validate, on_epoch)
    best = MemoryDecoderParams.from_arrays(report.extra.pop("best_arrays"))
    return MemoryTrainResult(best, memdec, report)


def select_lambda(dataset: Dataset, basis: BasisModel, memdec: MemoryDecoderParams, memory: MemoryBank,
                  grid: Sequence[float] | None = None, split: str = "val", max_len: int = 20,
                  beam: int = 1) -> tuple[float, dict[float, float]]:
    """Grid-search the fusion weight on ``split`` by CIDEr; ties go to the smaller lambda."""
    grid = [round(0.1 * i, 10) for i in range(11)] if grid is None else list(grid)
    table = {}
    for lam in grid:
        table[lam] = validation_cider(dataset, Captioner(basis, memdec, memory, lam=lam), split, max_len, beam)
    best = max(sorted(table), key=lambda lam: (table[lam], -lam))
    return best, table
