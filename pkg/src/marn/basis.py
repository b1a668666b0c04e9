"""Attention-based recurrent (GRU) basis decoder.

Frame and clip features are projected to a common width ``m``; at each step a
single shared attention perceptron pools each stream given the previous hidden
state, the two pooled contexts are concatenated with the previous word's
embedding to drive a GRU, and a linear softmax head gives the word distribution.
"""

from __future__ import annotations

from dataclasses import dataclass, fields, replace

import numpy as np

from . import ops
from .errors import ContractError, ShapeError
from .features import VideoFeatures
from .tensor import Tensor, column, concat, getitem, matmul, softmax, stack, transpose
from .vocab import BOS_ID, EOS_ID


@dataclass(frozen=True)
class ModelDims:
    d: int  # frame feature width
    c: int  # clip feature width
    K: int  # vocabulary size
    m: int = 64  # projected feature width
    H: int = 64  # GRU hidden width
    A: int = 64  # attention hidden width
    emb: int = 64  # word embedding width

    @property
    def gru_input(self) -> int:
        return 2 * self.m + self.emb


@dataclass(eq=False)
class EncoderParams:
    M_f: Tensor
    b_f: Tensor
    M_v: Tensor
    b_v: Tensor


@dataclass(eq=False)
class BasisDecoderParams:
    E: Tensor  # emb x K, one column per word
    gru_Wx: Tensor  # 3H x (2m + emb), rows [update; reset; candidate]
    gru_Wh: Tensor  # 3H x H
    gru_b: Tensor  # 3H
    att_w1: Tensor  # A x (H + m)
    att_b1: Tensor  # A
    att_w2: Tensor  # A
    out_W: Tensor  # K x H
    out_b: Tensor  # K


def _shapes(dims: ModelDims):
    m, H, A, e, K = dims.m, dims.H, dims.A, dims.emb, dims.K
    # name -> (shape, fan-in used for the uniform init range)
    return {
        "enc/M_f": ((m, dims.d), dims.d),
        "enc/b_f": ((m,), dims.d),
        "enc/M_v": ((m, dims.c), dims.c),
        "enc/b_v": ((m,), dims.c),
        "basis/E": ((e, K), e),
        "basis/gru_Wx": ((3 * H, dims.gru_input), dims.gru_input),
        "basis/gru_Wh": ((3 * H, H), H),
        "basis/gru_b": ((3 * H,), H),
        "basis/att_w1": ((A, H + m), H + m),
        "basis/att_b1": ((A,), H + m),
        "basis/att_w2": ((A,), A),
        "basis/out_W": ((K, H), H),
        "basis/out_b": ((K,), H),
    }


@dataclass(eq=False)
class BasisModel:
    dims: ModelDims
    enc: EncoderParams
    dec: BasisDecoderParams

    @classmethod
    def init(cls, dims: ModelDims, seed: int = 0) -> "BasisModel":
        rng = np.random.default_rng(seed)
        arrays = {}
        for name, (shape, fan_in) in _shapes(dims).items():
            s = 1.0 / np.sqrt(fan_in)
            arrays[name] = rng.uniform(-s, s, size=shape)
        return cls.from_arrays(arrays, dims)

    @classmethod
    def from_arrays(cls, arrays: dict[str, np.ndarray], dims: ModelDims | None = None) -> "BasisModel":
        if dims is None:
            m, d = arrays["enc/M_f"].shape
            c = arrays["enc/M_v"].shape[1]
            emb, K = arrays["basis/E"].shape
            H = arrays["basis/gru_Wh"].shape[1]
            A = arrays["basis/att_w1"].shape[0]
            dims = ModelDims(d=d, c=c, K=K, m=m, H=H, A=A, emb=emb)
        expected = _shapes(dims)
        missing = set(expected) - set(arrays)
        if missing:
            raise ShapeError(f"checkpoint lacks basis parameters {sorted(missing)}")
        t = {}
        for name, (shape, _) in expected.items():
            arr = np.array(arrays[name], dtype=np.float64)
            if arr.shape != shape:
                raise ShapeError(f"{name}: expected shape {shape}, got {arr.shape}")
            t[name] = Tensor(arr, requires_grad=True, name=name)
        enc = EncoderParams(*(t[f"enc/{f.name}"] for f in fields(EncoderParams)))
        dec = BasisDecoderParams(*(t[f"basis/{f.name}"] for f in fields(BasisDecoderParams)))
        return cls(dims, enc, dec)

    def named_parameters(self) -> dict[str, Tensor]:
        out = {f"enc/{f.name}": getattr(self.enc, f.name) for f in fields(EncoderParams)}
        out.update({f"basis/{f.name}": getattr(self.dec, f.name) for f in fields(BasisDecoderParams)})
        return out

    def arrays(self) -> dict[str, np.ndarray]:
        return {k: v.data.copy() for k, v in self.named_parameters().items()}


@dataclass
class DecoderState:
    h: Tensor
    prev_token: int
    t: int = 0


@dataclass
class StepTriple:
    """The basis-decoder quantities the memory decoder consumes at one step."""

    h_prev: Tensor
    c_t: Tensor
    e_prev: Tensor


@dataclass
class TeacherForced:
    probs: Tensor  # (T-1) x K
    a2d: Tensor  # (T-1) x L
    a3d: Tensor  # (T-1) x N
    steps: list[StepTriple]
    targets: np.ndarray


def project_features(video: VideoFeatures, enc: EncoderParams) -> tuple[Tensor, Tensor]:
    """Affine projection of every frame and clip feature to width ``m``."""
    if video.d != enc.M_f.shape[1] or video.c != enc.M_v.shape[1]:
        raise ShapeError(
            f"video {video.id!r} has widths d={video.d}, c={video.c}; encoder expects "
            f"{enc.M_f.shape[1]} and {enc.M_v.shape[1]}"
        )
    f2 = matmul(Tensor(video.f2d), transpose(enc.M_f)) + enc.b_f
    f3 = matmul(Tensor(video.f3d), transpose(enc.M_v)) + enc.b_v
    return f2, f3


def attend(h_prev: Tensor, feats: Tensor, dec: BasisDecoderParams) -> tuple[Tensor, Tensor]:
    """Attention weights over ``feats`` rows and the weighted context."""
    return ops.attention(h_prev, feats, dec.att_w1, dec.att_b1, dec.att_w2)


def build_context(h_prev: Tensor, f2: Tensor, f3: Tensor, dec: BasisDecoderParams):
    """Returns ``(c_t, a2d_row, a3d_row)`` with ``c_t = [c_2d; c_3d]``."""
    a2, c2 = attend(h_prev, f2, dec)
    a3, c3 = attend(h_prev, f3, dec)
    return concat([c2, c3]), a2, a3


def embed(token: int, dec: BasisDecoderParams) -> Tensor:
    K = dec.E.shape[1]
    if not 0 <= token < K:
        raise ContractError(f"token {token} outside vocabulary of size {K}")
    return column(dec.E, token)


def gru_step(state: DecoderState, c_t: Tensor, dec: BasisDecoderParams,
             e_prev: Tensor | None = None) -> DecoderState:
    """Advance the hidden state; ``e_prev`` defaults to the embedding of ``state.prev_token``."""
    if e_prev is None:
        e_prev = embed(state.prev_token, dec)
    h = ops.gru_cell(concat([c_t, e_prev]), state.h, dec.gru_Wx, dec.gru_Wh, dec.gru_b)
    return replace(state, h=h, t=state.t + 1)


def predict_word(h: Tensor, dec: BasisDecoderParams) -> Tensor:
    """P_b for one hidden vector, or row-wise for a stack of them."""
    if h.ndim == 1:
        return softmax(matmul(dec.out_W, h) + dec.out_b)
    return softmax(matmul(h, transpose(dec.out_W)) + dec.out_b)


def initial_state(dims: ModelDims) -> DecoderState:
    return DecoderState(Tensor(np.zeros(dims.H)), BOS_ID, 0)


def forward_teacher_forced(video: VideoFeatures, caption, model: BasisModel) -> TeacherForced:
    """Run the decoder on a ground-truth caption ``<bos> ... <eos>``.

    Step ``t`` (1-based) consumes token ``t-1`` and predicts token ``t``.
    """
    ids = [int(i) for i in caption]
    if len(ids) < 3:
        raise ContractError(f"caption needs at least 3 tokens, got {len(ids)}")
    if ids[0] != BOS_ID or ids[-1] != EOS_ID:
        raise ContractError("caption must start with <bos> and end with <eos>")
    dec = model.dec
    f2, f3 = project_features(video, model.enc)
    state = initial_state(model.dims)
    hs, a2s, a3s, steps = [], [], [], []
    inputs = ids[:-1]
    embs = transpose(getitem(dec.E, (slice(None), inputs)))
    for t, tok in enumerate(inputs):
        state = replace(state, prev_token=tok)
        c_t, a2, a3 = build_context(state.h, f2, f3, dec)
        h_prev = state.h
        e_prev = embs[t]
        state = gru_step(state, c_t, dec, e_prev)
        steps.append(StepTriple(h_prev, c_t, e_prev))
        hs.append(state.h)
        a2s.append(a2)
        a3s.append(a3)
    probs = predict_word(stack(hs), dec)
    return TeacherForced(probs, stack(a2s), stack(a3s), steps, np.array(ids[1:]))
