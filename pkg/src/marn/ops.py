"""Fused, tape-aware operations backed by the selected kernel backend.

Each op is a single tape node with a hand-derived vector-Jacobian product; the
gradient checks in the test-suite cover them against central differences.
"""

import numpy as np

from . import kernels
from .errors import ContractError, ShapeError
from .tensor import Tensor, as_tensor, record


def _c(x):
    return np.ascontiguousarray(x, dtype=np.float64)


def attention(h: Tensor, feats: Tensor, w1: Tensor, b1: Tensor, w2: Tensor):
    """Softmax attention of ``h`` over the rows of ``feats``.

    Returns ``(weights, context)`` tensors.
    """
    h, feats = as_tensor(h), as_tensor(feats)
    if feats.ndim != 2 or feats.shape[0] == 0:
        raise ContractError("attention needs at least one feature vector")
    if w1.shape[1] != h.shape[0] + feats.shape[1]:
        raise ShapeError(
            f"attention weight {w1.shape} does not fit hidden {h.shape} + feature {feats.shape}"
        )
    args = (_c(h.data), _c(feats.data), _c(w1.data))
    w2d = _c(w2.data)
    a, ctx, Z = kernels.attention_forward(*args, _c(b1.data), w2d)

    def vjp(g):
        g_a, g_ctx = g
        return kernels.attention_backward(*args, w2d, a, Z, _c(g_ctx), _c(g_a))

    return record("attention", (h, feats, w1, b1, w2), (a, ctx), vjp)


def gru_cell(x: Tensor, h: Tensor, wx: Tensor, wh: Tensor, b: Tensor) -> Tensor:
    x, h = as_tensor(x), as_tensor(h)
    H = h.shape[0]
    if wx.shape != (3 * H, x.shape[0]) or wh.shape != (3 * H, H) or b.shape != (3 * H,):
        raise ShapeError(
            f"GRU weights {wx.shape}, {wh.shape}, {b.shape} do not fit input {x.shape}, hidden {h.shape}"
        )
    args = (_c(x.data), _c(h.data), _c(wx.data), _c(wh.data))
    h_new, cache = kernels.gru_forward(*args, _c(b.data))

    def vjp(g):
        return kernels.gru_backward(*args, cache, _c(g[0]))

    (res,) = record("gru", (x, h, wx, wh, b), (h_new,), vjp)
    return res


def relevance(S: Tensor, G: Tensor, v: Tensor) -> Tensor:
    """Score matrix ``q[t, i] = v . tanh(S[t] + G[i])``."""
    S, G = as_tensor(S), as_tensor(G)
    if S.ndim != 2 or G.ndim != 2 or S.shape[1] != G.shape[1] or v.shape != (S.shape[1],):
        raise ShapeError(f"relevance operands disagree: S {S.shape}, G {G.shape}, v {v.shape}")
    vd = _c(v.data)
    q, Z = kernels.relevance_forward(_c(S.data), _c(G.data), vd)

    def vjp(g):
        return kernels.relevance_backward(Z, vd, _c(g[0]))

    (res,) = record("relevance", (S, G, v), (q,), vjp)
    return res
