"""Pure-numpy kernels: the fallback when the compiled extension is unavailable.

Every function here has a twin of the same name and signature in
``_ckernels.pyx``.  Inputs are float64 arrays; outputs are fresh arrays.
"""

import numpy as np

BACKEND = "numpy"


def attention_forward(h, F, W1, b1, w2):
    """Shared two-layer attention over the rows of ``F``.

    ``W1`` is ``A x (H + m)``: the first ``H`` columns act on ``h``, the rest on
    a feature row.  Returns ``(weights, context, Z)`` where ``Z`` caches the
    tanh layer for the backward pass.
    """
    H = h.shape[0]
    pre = W1[:, :H] @ h + b1
    Z = np.tanh(F @ W1[:, H:].T + pre)
    s = Z @ w2
    s = s - s.max()
    e = np.exp(s)
    a = e / e.sum()
    return a, a @ F, Z


def attention_backward(h, F, W1, w2, a, Z, g_ctx, g_a):
    H = h.shape[0]
    g_at = g_a + F @ g_ctx
    g_s = a * (g_at - a @ g_at)
    g_w2 = Z.T @ g_s
    g_u = np.outer(g_s, w2) * (1.0 - Z * Z)
    g_pre = g_u.sum(axis=0)
    g_W1 = np.empty_like(W1)
    g_W1[:, :H] = np.outer(g_pre, h)
    g_W1[:, H:] = g_u.T @ F
    g_h = W1[:, :H].T @ g_pre
    g_F = g_u @ W1[:, H:] + np.outer(a, g_ctx)
    return g_h, g_F, g_W1, g_pre, g_w2


def _sigmoid(x):
    return 0.5 * (1.0 + np.tanh(0.5 * x))


def gru_forward(x, h, Wx, Wh, b):
    """One GRU step; gate rows are stacked [update; reset; candidate]."""
    H = h.shape[0]
    gx = Wx @ x + b
    z = _sigmoid(gx[:H] + Wh[:H] @ h)
    r = _sigmoid(gx[H:2 * H] + Wh[H:2 * H] @ h)
    hc = np.tanh(gx[2 * H:] + Wh[2 * H:] @ (r * h))
    h_new = (1.0 - z) * h + z * hc
    return h_new, np.concatenate([z, r, hc])


def gru_backward(x, h, Wx, Wh, cache, g):
    H = h.shape[0]
    z, r, hc = cache[:H], cache[H:2 * H], cache[2 * H:]
    rh = r * h
    g_pc = g * z * (1.0 - hc * hc)
    g_pz = g * (hc - h) * z * (1.0 - z)
    g_rh = Wh[2 * H:].T @ g_pc
    g_pr = g_rh * h * r * (1.0 - r)
    gpre = np.concatenate([g_pz, g_pr, g_pc])
    g_Wh = np.empty_like(Wh)
    g_Wh[:H] = np.outer(g_pz, h)
    g_Wh[H:2 * H] = np.outer(g_pr, h)
    g_Wh[2 * H:] = np.outer(g_pc, rh)
    g_h = g * (1.0 - z) + g_rh * r + Wh[:H].T @ g_pz + Wh[H:2 * H].T @ g_pr
    return Wx.T @ gpre, g_h, np.outer(gpre, x), g_Wh, gpre


def relevance_forward(S, G, v):
    """``q[t, i] = v . tanh(S[t] + G[i])`` for every step/word pair."""
    Z = np.tanh(S[:, None, :] + G[None, :, :])
    return Z @ v, Z


def relevance_backward(Z, v, g_q):
    g_v = np.einsum("tk,tka->a", g_q, Z)
    g_pre = (g_q[:, :, None] * v) * (1.0 - Z * Z)
    return g_pre.sum(axis=1), g_pre.sum(axis=0), g_v
