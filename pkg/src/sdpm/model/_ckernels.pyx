# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled transformer-block kernels.

Same contract as ``_pykernels``: X is (B, T, E), ``w`` is the 13-tuple of
block weights and the cache layout matches, so either backend's cache can be
fed to either backward pass. All arrays must be C-contiguous float64.
"""
import numpy as np
from libc.math cimport exp, sqrt, tanh

cdef double LN_EPS = 1e-5


cdef void _layer_norm_row(double[::1] r, double[::1] g, double[::1] c,
                          double[::1] xhat, double* rstd_out, double[::1] y) nogil:
    cdef Py_ssize_t j, E = r.shape[0]
    cdef double mu = 0.0, var = 0.0, d, rs
    for j in range(E):
        mu += r[j]
    mu /= E
    for j in range(E):
        d = r[j] - mu
        var += d * d
    var /= E
    rs = 1.0 / sqrt(var + LN_EPS)
    rstd_out[0] = rs
    for j in range(E):
        xhat[j] = (r[j] - mu) * rs
        y[j] = xhat[j] * g[j] + c[j]


cdef void _layer_norm_back_row(double[::1] dy, double[::1] xhat, double rs, double[::1] g,
                               double[::1] dg, double[::1] dc, double[::1] dr) nogil:
    cdef Py_ssize_t j, E = dy.shape[0]
    cdef double m1 = 0.0, m2 = 0.0, dxh
    for j in range(E):
        dxh = dy[j] * g[j]
        m1 += dxh
        m2 += dxh * xhat[j]
        dg[j] += dy[j] * xhat[j]
        dc[j] += dy[j]
    m1 /= E
    m2 /= E
    for j in range(E):
        dr[j] = rs * (dy[j] * g[j] - m1 - xhat[j] * m2)


def _c(a):
    return np.ascontiguousarray(a, dtype=np.float64)


def block_forward(X, w, int n_heads):
    cdef double[:, :, ::1] x = _c(X)
    wq_, wk_, wv_, wo_, bo_, g1_, c1_, wf1_, bf1_, wf2_, bf2_, g2_, c2_ = [_c(a) for a in w]
    cdef double[:, ::1] wq = wq_, wk = wk_, wv = wv_, wo = wo_, wf1 = wf1_, wf2 = wf2_
    cdef double[::1] bo = bo_, g1 = g1_, c1 = c1_, bf1 = bf1_, bf2 = bf2_, g2 = g2_, c2 = c2_
    cdef Py_ssize_t B = x.shape[0], T = x.shape[1], E = x.shape[2], Fd = wf1.shape[1]
    cdef Py_ssize_t dh = E // n_heads
    cdef Py_ssize_t b, t, s, i, j, f, hh, d, off
    cdef double acc, qv, kv, vv, mx, tot, e, xi
    cdef double scale = 1.0 / sqrt(<double>dh)

    Q_ = np.empty((B, T, E)); K_ = np.empty((B, T, E)); V_ = np.empty((B, T, E))
    A_ = np.empty((B, n_heads, T, T)); O_ = np.empty((B, T, E))
    xh1_ = np.empty((B, T, E)); rs1_ = np.empty((B, T, 1)); Y1_ = np.empty((B, T, E))
    H_ = np.empty((B, T, Fd)); xh2_ = np.empty((B, T, E)); rs2_ = np.empty((B, T, 1))
    Y2_ = np.empty((B, T, E)); r_ = np.empty(E)
    cdef double[:, :, ::1] Q = Q_, K = K_, V = V_, O = O_, xh1 = xh1_, rs1 = rs1_
    cdef double[:, :, ::1] Y1 = Y1_, H = H_, xh2 = xh2_, rs2 = rs2_, Y2 = Y2_
    cdef double[:, :, :, ::1] A = A_
    cdef double[::1] r = r_

    with nogil:
        for b in range(B):
            for t in range(T):
                for j in range(E):
                    qv = 0.0
                    kv = 0.0
                    vv = 0.0
                    for i in range(E):
                        xi = x[b, t, i]
                        qv = qv + xi * wq[i, j]
                        kv = kv + xi * wk[i, j]
                        vv = vv + xi * wv[i, j]
                    Q[b, t, j] = qv
                    K[b, t, j] = kv
                    V[b, t, j] = vv
            for hh in range(n_heads):
                off = hh * dh
                for t in range(T):
                    mx = -1e308
                    for s in range(T):
                        acc = 0.0
                        for d in range(dh):
                            acc = acc + Q[b, t, off + d] * K[b, s, off + d]
                        acc = acc * scale
                        A[b, hh, t, s] = acc
                        if acc > mx:
                            mx = acc
                    tot = 0.0
                    for s in range(T):
                        e = exp(A[b, hh, t, s] - mx)
                        A[b, hh, t, s] = e
                        tot = tot + e
                    for s in range(T):
                        A[b, hh, t, s] = A[b, hh, t, s] / tot
                    for d in range(dh):
                        acc = 0.0
                        for s in range(T):
                            acc = acc + A[b, hh, t, s] * V[b, s, off + d]
                        O[b, t, off + d] = acc
            for t in range(T):
                for j in range(E):
                    acc = bo[j]
                    for i in range(E):
                        acc = acc + O[b, t, i] * wo[i, j]
                    r[j] = x[b, t, j] + acc
                _layer_norm_row(r, g1, c1, xh1[b, t], &rs1[b, t, 0], Y1[b, t])
                for f in range(Fd):
                    acc = bf1[f]
                    for i in range(E):
                        acc = acc + Y1[b, t, i] * wf1[i, f]
                    H[b, t, f] = tanh(acc)
                for j in range(E):
                    acc = bf2[j]
                    for f in range(Fd):
                        acc = acc + H[b, t, f] * wf2[f, j]
                    r[j] = Y1[b, t, j] + acc
                _layer_norm_row(r, g2, c2, xh2[b, t], &rs2[b, t, 0], Y2[b, t])

    return Y2_, (np.asarray(x), Q_, K_, V_, A_, O_, xh1_, rs1_, Y1_, H_, xh2_, rs2_)


def block_backward(dY2_in, cache, w, int n_heads):
    cdef double[:, :, ::1] dY2 = _c(dY2_in)
    wq_, wk_, wv_, wo_, bo_, g1_, c1_, wf1_, bf1_, wf2_, bf2_, g2_, c2_ = [_c(a) for a in w]
    cdef double[:, ::1] wq = wq_, wk = wk_, wv = wv_, wo = wo_, wf1 = wf1_, wf2 = wf2_
    cdef double[::1] g1 = g1_, g2 = g2_
    X_, Q_, K_, V_, A_, O_, xh1_, rs1_, Y1_, H_, xh2_, rs2_ = [_c(a) for a in cache]
    cdef double[:, :, ::1] x = X_, Q = Q_, K = K_, V = V_, O = O_, xh1 = xh1_, rs1 = rs1_
    cdef double[:, :, ::1] Y1 = Y1_, H = H_, xh2 = xh2_, rs2 = rs2_
    cdef double[:, :, :, ::1] A = A_
    cdef Py_ssize_t B = x.shape[0], T = x.shape[1], E = x.shape[2], Fd = wf1.shape[1]
    cdef Py_ssize_t dh = E // n_heads
    cdef Py_ssize_t b, t, s, i, j, f, hh, d, off
    cdef double acc, aq, ak, av, dot
    cdef double scale = 1.0 / sqrt(<double>dh)

    gq_ = np.zeros((E, E)); gk_ = np.zeros((E, E)); gv_ = np.zeros((E, E)); go_ = np.zeros((E, E))
    gbo_ = np.zeros(E); gg1_ = np.zeros(E); gc1_ = np.zeros(E)
    gf1_ = np.zeros((E, Fd)); gbf1_ = np.zeros(Fd); gf2_ = np.zeros((Fd, E)); gbf2_ = np.zeros(E)
    gg2_ = np.zeros(E); gc2_ = np.zeros(E)
    dX_ = np.empty((B, T, E))
    dR2_ = np.empty((T, E)); dY1_ = np.empty((T, E)); dR1_ = np.empty((T, E)); dO_ = np.empty((T, E))
    dQ_ = np.empty((T, E)); dK_ = np.empty((T, E)); dV_ = np.empty((T, E))
    dpre_ = np.empty(Fd); dA_ = np.empty(T)
    cdef double[:, ::1] gq = gq_, gk = gk_, gv = gv_, go = go_, gf1 = gf1_, gf2 = gf2_
    cdef double[::1] gbo = gbo_, gg1 = gg1_, gc1 = gc1_, gbf1 = gbf1_, gbf2 = gbf2_, gg2 = gg2_, gc2 = gc2_
    cdef double[:, :, ::1] dX = dX_
    cdef double[:, ::1] dR2 = dR2_, dY1 = dY1_, dR1 = dR1_, dO = dO_, dQ = dQ_, dK = dK_, dV = dV_
    cdef double[::1] dpre = dpre_, dA = dA_

    with nogil:
        for b in range(B):
            for t in range(T):
                _layer_norm_back_row(dY2[b, t], xh2[b, t], rs2[b, t, 0], g2, gg2, gc2, dR2[t])
                for j in range(E):
                    gbf2[j] += dR2[t, j]
                for f in range(Fd):
                    acc = 0.0
                    for j in range(E):
                        gf2[f, j] += H[b, t, f] * dR2[t, j]
                        acc = acc + dR2[t, j] * wf2[f, j]
                    dpre[f] = acc * (1.0 - H[b, t, f] * H[b, t, f])
                    gbf1[f] += dpre[f]
                for i in range(E):
                    acc = dR2[t, i]
                    for f in range(Fd):
                        gf1[i, f] += Y1[b, t, i] * dpre[f]
                        acc = acc + dpre[f] * wf1[i, f]
                    dY1[t, i] = acc
                _layer_norm_back_row(dY1[t], xh1[b, t], rs1[b, t, 0], g1, gg1, gc1, dR1[t])
                for j in range(E):
                    gbo[j] += dR1[t, j]
                for i in range(E):
                    acc = 0.0
                    for j in range(E):
                        go[i, j] += O[b, t, i] * dR1[t, j]
                        acc = acc + dR1[t, j] * wo[i, j]
                    dO[t, i] = acc
                    dQ[t, i] = 0.0
                    dK[t, i] = 0.0
                    dV[t, i] = 0.0
            for hh in range(n_heads):
                off = hh * dh
                for t in range(T):
                    dot = 0.0
                    for s in range(T):
                        acc = 0.0
                        for d in range(dh):
                            acc = acc + dO[t, off + d] * V[b, s, off + d]
                            dV[s, off + d] += A[b, hh, t, s] * dO[t, off + d]
                        dA[s] = acc
                        dot = dot + acc * A[b, hh, t, s]
                    for s in range(T):
                        acc = A[b, hh, t, s] * (dA[s] - dot) * scale
                        for d in range(dh):
                            dQ[t, off + d] += acc * K[b, s, off + d]
                            dK[s, off + d] += acc * Q[b, t, off + d]
            for t in range(T):
                for i in range(E):
                    aq = 0.0
                    ak = 0.0
                    av = 0.0
                    for j in range(E):
                        gq[i, j] += x[b, t, i] * dQ[t, j]
                        gk[i, j] += x[b, t, i] * dK[t, j]
                        gv[i, j] += x[b, t, i] * dV[t, j]
                        aq = aq + dQ[t, j] * wq[i, j]
                        ak = ak + dK[t, j] * wk[i, j]
                        av = av + dV[t, j] * wv[i, j]
                    dX[b, t, i] = dR1[t, i] + aq + ak + av

    return dX_, (gq_, gk_, gv_, go_, gbo_, gg1_, gc1_, gf1_, gbf1_, gf2_, gbf2_, gg2_, gc2_)
