# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled hot kernels; same signatures and results as ``_kernels_py``."""

import numpy as np
from libc.math cimport exp, tanh

BACKEND = "cython"


def attention_forward(h, F, W1, b1, w2):
    cdef Py_ssize_t H = h.shape[0], n = F.shape[0], m = F.shape[1]
    cdef Py_ssize_t i, j
    cdef double smax, total
    # the two products go to BLAS; tanh, softmax and the context sum are fused below
    Z_arr = F @ W1[:, H:].T
    Z_arr += W1[:, :H] @ h + b1
    np.tanh(Z_arr, out=Z_arr)
    s_arr = Z_arr @ w2
    a_arr = np.empty(n)
    ctx_arr = np.zeros(m)
    cdef double[::1] s = s_arr, a = a_arr, ctx = ctx_arr
    cdef const double[:, ::1] Fv = F
    smax = s[0]
    for i in range(1, n):
        if s[i] > smax:
            smax = s[i]
    total = 0.0
    for i in range(n):
        a[i] = exp(s[i] - smax)
        total += a[i]
    for i in range(n):
        a[i] /= total
        for j in range(m):
            ctx[j] += a[i] * Fv[i, j]
    return a_arr, ctx_arr, Z_arr


def attention_backward(h, F, W1, w2, a, Z, g_ctx, g_a):
    cdef Py_ssize_t H = h.shape[0], n = F.shape[0], m = F.shape[1], A = W1.shape[0]
    cdef Py_ssize_t i, j, k
    cdef double acc, dot, gs
    cdef const double[:, ::1] Fv = F, Zv = Z
    cdef const double[::1] av = a, gcv = g_ctx, gav = g_a, w2v = w2
    g_s_arr = np.empty(n)
    g_u_arr = np.empty((n, A))
    g_w2_arr = np.zeros(A)
    g_pre_arr = np.zeros(A)
    cdef double[::1] g_s = g_s_arr, g_w2 = g_w2_arr, g_pre = g_pre_arr
    cdef double[:, ::1] g_u = g_u_arr
    dot = 0.0
    for i in range(n):
        acc = gav[i]
        for j in range(m):
            acc += Fv[i, j] * gcv[j]
        g_s[i] = acc
        dot += av[i] * acc
    for i in range(n):
        gs = av[i] * (g_s[i] - dot)
        for k in range(A):
            g_w2[k] += Zv[i, k] * gs
            acc = gs * w2v[k] * (1.0 - Zv[i, k] * Zv[i, k])
            g_u[i, k] = acc
            g_pre[k] += acc
    g_W1_arr = np.empty((A, H + m))
    g_W1_arr[:, :H] = np.multiply.outer(g_pre_arr, h)
    g_W1_arr[:, H:] = g_u_arr.T @ F
    g_F_arr = g_u_arr @ W1[:, H:]
    g_F_arr += np.multiply.outer(a, g_ctx)
    g_h_arr = g_pre_arr @ W1[:, :H]
    return g_h_arr, g_F_arr, g_W1_arr, g_pre_arr, g_w2_arr


cdef inline double _sigmoid(double x) nogil:
    return 0.5 * (1.0 + tanh(0.5 * x))


def gru_forward(const double[::1] x, const double[::1] h,
                const double[:, ::1] Wx, const double[:, ::1] Wh,
                const double[::1] b):
    cdef Py_ssize_t H = h.shape[0], I = x.shape[0]
    cdef Py_ssize_t i, j
    cdef double acc
    gx_arr = np.empty(3 * H)
    cache_arr = np.empty(3 * H)
    h_new_arr = np.empty(H)
    rh_arr = np.empty(H)
    cdef double[::1] gx = gx_arr, cache = cache_arr, h_new = h_new_arr, rh = rh_arr
    for i in range(3 * H):
        acc = b[i]
        for j in range(I):
            acc += Wx[i, j] * x[j]
        gx[i] = acc
    for i in range(2 * H):
        acc = gx[i]
        for j in range(H):
            acc += Wh[i, j] * h[j]
        cache[i] = _sigmoid(acc)
    for j in range(H):
        rh[j] = cache[H + j] * h[j]
    for i in range(H):
        acc = gx[2 * H + i]
        for j in range(H):
            acc += Wh[2 * H + i, j] * rh[j]
        cache[2 * H + i] = tanh(acc)
        h_new[i] = (1.0 - cache[i]) * h[i] + cache[i] * cache[2 * H + i]
    return h_new_arr, cache_arr


def gru_backward(const double[::1] x, const double[::1] h,
                 const double[:, ::1] Wx, const double[:, ::1] Wh,
                 const double[::1] cache, const double[::1] g):
    cdef Py_ssize_t H = h.shape[0], I = x.shape[0]
    cdef Py_ssize_t i, j
    cdef double z, r, hc, acc
    gpre_arr = np.empty(3 * H)
    g_h_arr = np.empty(H)
    g_x_arr = np.zeros(I)
    g_Wx_arr = np.empty((3 * H, I))
    g_Wh_arr = np.empty((3 * H, H))
    g_rh_arr = np.zeros(H)
    cdef double[::1] gpre = gpre_arr, g_h = g_h_arr, g_x = g_x_arr, g_rh = g_rh_arr
    cdef double[:, ::1] g_Wx = g_Wx_arr, g_Wh = g_Wh_arr
    for i in range(H):
        z = cache[i]
        hc = cache[2 * H + i]
        gpre[2 * H + i] = g[i] * z * (1.0 - hc * hc)
        gpre[i] = g[i] * (hc - h[i]) * z * (1.0 - z)
        g_h[i] = g[i] * (1.0 - z)
    for i in range(H):
        acc = gpre[2 * H + i]
        for j in range(H):
            g_rh[j] += Wh[2 * H + i, j] * acc
            g_Wh[2 * H + i, j] = acc * cache[H + j] * h[j]
    for j in range(H):
        r = cache[H + j]
        gpre[H + j] = g_rh[j] * h[j] * r * (1.0 - r)
        g_h[j] += g_rh[j] * r
    for i in range(2 * H):
        acc = gpre[i]
        for j in range(H):
            g_Wh[i, j] = acc * h[j]
            g_h[j] += Wh[i, j] * acc
    for i in range(3 * H):
        acc = gpre[i]
        for j in range(I):
            g_Wx[i, j] = acc * x[j]
            g_x[j] += Wx[i, j] * acc
    return g_x_arr, g_h_arr, g_Wx_arr, g_Wh_arr, gpre_arr


def relevance_forward(S, G, v):
    cdef Py_ssize_t T = S.shape[0], K = G.shape[0], A = S.shape[1]
    cdef Py_ssize_t t, i, k
    cdef const double[:, ::1] Sv = S, Gv = G
    Z_arr = np.empty((T, K, A))
    cdef double[:, :, ::1] Z = Z_arr
    for t in range(T):
        for i in range(K):
            for k in range(A):
                Z[t, i, k] = Sv[t, k] + Gv[i, k]
    np.tanh(Z_arr, out=Z_arr)  # vectorised in place
    return Z_arr @ v, Z_arr


def relevance_backward(const double[:, :, ::1] Z, const double[::1] v,
                       const double[:, ::1] g_q):
    cdef Py_ssize_t T = Z.shape[0], K = Z.shape[1], A = Z.shape[2]
    cdef Py_ssize_t t, i, k
    cdef double gq, zz, gp
    g_S_arr = np.zeros((T, A))
    g_G_arr = np.zeros((K, A))
    g_v_arr = np.zeros(A)
    cdef double[:, ::1] g_S = g_S_arr, g_G = g_G_arr
    cdef double[::1] g_v = g_v_arr
    for t in range(T):
        for i in range(K):
            gq = g_q[t, i]
            for k in range(A):
                zz = Z[t, i, k]
                g_v[k] += gq * zz
                gp = gq * v[k] * (1.0 - zz * zz)
                g_S[t, k] += gp
                g_G[i, k] += gp
    return g_S_arr, g_G_arr, g_v_arr
