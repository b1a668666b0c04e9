"""Finite-difference gradient checks of both training losses on a tiny random model."""

from __future__ import annotations

import numpy as np

from .basis import BasisModel, ModelDims
from .dataset import Dataset, DatasetManifest, RawCaption, VideoEntry
from .features import VideoFeatures
from .memdec import MemoryDecoderParams
from .memory import assemble_memory
from .tensor import Tape, backward, grad_check
from .training import basis_loss, frozen_steps, memory_loss
from .vocab import RESERVED, Vocabulary

MICRO = dict(m=8, H=8, A=8, emb=8, K=12, L=6, N=2, k=2, d=8, c=8)


def micro_dataset(seed: int, n_videos: int = 3, n_categories: int = 3, n_val: int = 0) -> Dataset:
    """In-memory dataset with L=6 frames, N=2 clips and a 12-word vocabulary.

    The last ``n_val`` videos form the validation split; the rest are training videos.
    """
    rng = np.random.default_rng(seed)
    words = [f"w{i}" for i in range(MICRO["K"] - len(RESERVED))]
    vocab = Vocabulary(list(RESERVED) + words)
    feats, videos, caps = {}, [], []
    for i in range(n_videos):
        vid = f"m{i}"
        feats[vid] = VideoFeatures(vid, rng.normal(size=(MICRO["L"], MICRO["d"])),
                                   rng.normal(size=(MICRO["N"], MICRO["c"])), i % n_categories)
        videos.append(VideoEntry(vid, f"{vid}.marnf", "train" if i < n_videos - n_val else "val"))
        n_words = int(rng.integers(2, 5))
        caps.append(RawCaption(vid, " ".join(rng.choice(words, size=n_words))))
    return Dataset(DatasetManifest(videos, caps), vocab, feats)


def micro_model(seed: int) -> BasisModel:
    p = MICRO
    dims = ModelDims(d=p["d"], c=p["c"], K=p["K"], m=p["m"], H=p["H"], A=p["A"], emb=p["emb"])
    return BasisModel.init(dims, seed)


def micro_gradient_check(seed: int, beta: float = 0.1, h: float = 1e-5) -> dict[str, float]:
    """Max relative errors for the combined basis loss and the memory-decoder loss."""
    ds = micro_dataset(seed)
    model = micro_model(seed)
    samples = ds.samples("train")
    params = list(model.named_parameters().values())
    err_basis = grad_check(lambda: basis_loss(model, ds, samples, beta)[0], params, h)

    memory = assemble_memory(model, ds, k=MICRO["k"])
    memdec = MemoryDecoderParams.init(MICRO["A"], MICRO["m"], MICRO["emb"], MICRO["H"], memory.U, seed + 1)
    frozen = [frozen_steps(model, ds, s) for s in samples]
    mparams = list(memdec.named_parameters().values())
    err_mem = grad_check(lambda: memory_loss(memdec, memory, frozen), mparams, h)

    # the basis decoder and the memory contents must receive exactly zero gradient
    with Tape() as tape:
        loss = memory_loss(memdec, memory, frozen)
    grads = backward(loss, tape, params + mparams)
    frozen_max = max(float(np.abs(grads[p]).max()) for p in params)
    return {"combined": err_basis, "memory": err_mem, "frozen_grad_max": frozen_max}

