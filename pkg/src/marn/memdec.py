"""Attended memory decoder: scores every vocabulary word against its memory entry.

``q_i = v . tanh(W_c c_t + W_g g_i + W'_e e_prev + W_e e_i + W_h h_prev + W_u u_i + b)``

The step-dependent half (``c_t``, ``e_prev``, ``h_prev``, ``b``) and the
word-dependent half (``g_i``, ``e_i``, ``u_i``) are computed separately and
combined in the fused relevance kernel.
"""

from __future__ import annotations

from dataclasses import dataclass, fields

import numpy as np

from . import ops
from .errors import ConfigError, ShapeError
from .memory import MemoryBank
from .tensor import Tensor, as_tensor, matmul, reshape, softmax, transpose


@dataclass(eq=False)
class MemoryDecoderParams:
    v: Tensor  # A'
    W_c: Tensor  # A' x 2m
    W_g: Tensor  # A' x m
    W_pe: Tensor  # A' x emb, applied to the previous word
    W_e: Tensor  # A' x emb, applied to the candidate word
    W_h: Tensor  # A' x H
    b: Tensor  # A'
    W_u: Tensor | None = None  # A' x U, absent when there are no categories

    @classmethod
    def init(cls, width: int, m: int, emb: int, H: int, U: int, seed: int = 0) -> "MemoryDecoderParams":
        rng = np.random.default_rng(seed)
        shapes = _shapes(width, m, emb, H, U)
        arrays = {}
        for name, (shape, fan_in) in shapes.items():
            s = 1.0 / np.sqrt(fan_in)
            arrays[name] = rng.uniform(-s, s, size=shape)
        return cls.from_arrays(arrays)

    @classmethod
    def from_arrays(cls, arrays: dict[str, np.ndarray]) -> "MemoryDecoderParams":
        kw = {}
        for f in fields(cls):
            arr = arrays.get(f"memdec/{f.name}")
            if arr is None:
                if f.name == "W_u":
                    continue
                raise ShapeError(f"checkpoint lacks memdec/{f.name}")
            kw[f.name] = Tensor(np.array(arr, dtype=np.float64), requires_grad=True, name=f"memdec/{f.name}")
        return cls(**kw)

    def named_parameters(self) -> dict[str, Tensor]:
        out = {}
        for f in fields(self):
            t = getattr(self, f.name)
            if t is not None:
                out[f"memdec/{f.name}"] = t
        return out

    def arrays(self) -> dict[str, np.ndarray]:
        return {k: t.data.copy() for k, t in self.named_parameters().items()}

    @property
    def width(self) -> int:
        return self.v.shape[0]


def _shapes(width, m, emb, H, U):
    shapes = {
        "memdec/v": ((width,), width),
        "memdec/W_c": ((width, 2 * m), 2 * m),
        "memdec/W_g": ((width, m), m),
        "memdec/W_pe": ((width, emb), emb),
        "memdec/W_e": ((width, emb), emb),
        "memdec/W_h": ((width, H), H),
        "memdec/b": ((width,), width),
    }
    if U > 0:
        shapes["memdec/W_u"] = ((width, U), U)
    return shapes


def word_terms(memory: MemoryBank, p: MemoryDecoderParams) -> Tensor:
    """``W_g g_i + W_e e_i + W_u u_i`` for every word, as a K x A' tensor."""
    if memory.g.shape[1] != p.W_g.shape[1] or memory.e.shape[1] != p.W_e.shape[1]:
        raise ShapeError(
            f"memory widths (m={memory.g.shape[1]}, emb={memory.e.shape[1]}) do not match "
            f"decoder (m={p.W_g.shape[1]}, emb={p.W_e.shape[1]})"
        )
    G = matmul(Tensor(memory.g), transpose(p.W_g)) + matmul(Tensor(memory.e), transpose(p.W_e))
    if memory.U > 0:
        if p.W_u is None or p.W_u.shape[1] != memory.U:
            raise ShapeError(f"memory carries {memory.U} categories; decoder W_u does not match")
        G = G + matmul(Tensor(memory.u), transpose(p.W_u))
    return G


def step_terms(c_t, e_prev, h_prev, p: MemoryDecoderParams) -> Tensor:
    """``W_c c_t + W'_e e_prev + W_h h_prev + b`` row-wise for T x (.) inputs."""
    c_t, e_prev, h_prev = as_tensor(c_t), as_tensor(e_prev), as_tensor(h_prev)
    if c_t.shape[-1] != p.W_c.shape[1] or e_prev.shape[-1] != p.W_pe.shape[1] or h_prev.shape[-1] != p.W_h.shape[1]:
        raise ShapeError(
            f"step inputs c{c_t.shape}, e{e_prev.shape}, h{h_prev.shape} do not fit the memory decoder"
        )
    return (matmul(c_t, transpose(p.W_c)) + matmul(e_prev, transpose(p.W_pe))
            + matmul(h_prev, transpose(p.W_h)) + p.b)


def relevance_scores(c_t, e_prev, h_prev, memory: MemoryBank, p: MemoryDecoderParams,
                     G: Tensor | None = None) -> Tensor:
    """Relevance of every vocabulary word; a K-vector for one step, T x K for stacked steps.

    ``G`` may carry precomputed :func:`word_terms` for repeated scoring.
    """
    single = as_tensor(c_t).ndim == 1
    if single:
        c_t, e_prev, h_prev = (reshape(x, (1, -1)) for x in (c_t, e_prev, h_prev))
    if G is None:
        G = word_terms(memory, p)
    q = ops.relevance(step_terms(c_t, e_prev, h_prev, p), G, p.v)
    return q[0] if single else q


def memory_probabilities(q) -> Tensor:
    return softmax(q)


def fuse_probabilities(p_b, p_m, lam: float):
    """``(1 - lam) P_b + lam P_m``; works on arrays and on tensors."""
    if not 0.0 <= lam <= 1.0:
        raise ConfigError(f"fusion lambda must lie in [0, 1], got {lam}")
    return (1.0 - lam) * p_b + lam * p_m
