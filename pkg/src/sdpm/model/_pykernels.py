"""Pure numpy transformer-block kernels (fallback backend).

``block_forward`` and ``block_backward`` share their argument layout with the
compiled ``_ckernels`` module so the two are interchangeable:

* ``X`` has shape ``(B, T, E)``
* ``w`` is the tuple ``(wq, wk, wv, wo, bo, g1, c1, wf1, bf1, wf2, bf2, g2, c2)``
* the cache is ``(X, Q, K, V, A, O, xhat1, rstd1, Y1, H, xhat2, rstd2)``
"""
import numpy as np

LN_EPS = 1e-5

BLOCK_PARAM_NAMES = ("wq", "wk", "wv", "wo", "bo", "g1", "c1", "wf1", "bf1", "wf2", "bf2", "g2", "c2")


def softmax_rows(S):
    S = S - S.max(axis=-1, keepdims=True)
    e = np.exp(S)
    return e / e.sum(axis=-1, keepdims=True)


def _split_heads(M, h):
    B, T, E = M.shape
    return M.reshape(B, T, h, E // h).transpose(0, 2, 1, 3)


def _merge_heads(M):
    B, h, T, dh = M.shape
    return M.transpose(0, 2, 1, 3).reshape(B, T, h * dh)


def _layer_norm(R, g, c):
    mu = R.mean(axis=-1, keepdims=True)
    var = ((R - mu) ** 2).mean(axis=-1, keepdims=True)
    rstd = 1.0 / np.sqrt(var + LN_EPS)
    xhat = (R - mu) * rstd
    return xhat * g + c, xhat, rstd


def _layer_norm_back(dY, xhat, rstd, g):
    dg = np.einsum("bte,bte->e", dY, xhat)
    dc = dY.sum(axis=(0, 1))
    dxh = dY * g
    dR = rstd * (dxh - dxh.mean(axis=-1, keepdims=True) - xhat * (dxh * xhat).mean(axis=-1, keepdims=True))
    return dR, dg, dc


def block_forward(X, w, n_heads):
    wq, wk, wv, wo, bo, g1, c1, wf1, bf1, wf2, bf2, g2, c2 = w
    dh = X.shape[2] // n_heads
    Q = X @ wq
    K = X @ wk
    V = X @ wv
    Qh, Kh, Vh = _split_heads(Q, n_heads), _split_heads(K, n_heads), _split_heads(V, n_heads)
    A = softmax_rows(Qh @ Kh.transpose(0, 1, 3, 2) / np.sqrt(dh))
    O = _merge_heads(A @ Vh)
    R1 = X + O @ wo + bo
    Y1, xhat1, rstd1 = _layer_norm(R1, g1, c1)
    H = np.tanh(Y1 @ wf1 + bf1)
    R2 = Y1 + H @ wf2 + bf2
    Y2, xhat2, rstd2 = _layer_norm(R2, g2, c2)
    return Y2, (X, Q, K, V, A, O, xhat1, rstd1, Y1, H, xhat2, rstd2)


def block_backward(dY2, cache, w, n_heads):
    wq, wk, wv, wo, bo, g1, c1, wf1, bf1, wf2, bf2, g2, c2 = w
    X, Q, K, V, A, O, xhat1, rstd1, Y1, H, xhat2, rstd2 = cache
    dh = X.shape[2] // n_heads

    dR2, dg2, dc2 = _layer_norm_back(dY2, xhat2, rstd2, g2)
    dwf2 = np.einsum("btf,bte->fe", H, dR2)
    dbf2 = dR2.sum(axis=(0, 1))
    dpre = (dR2 @ wf2.T) * (1.0 - H * H)
    dwf1 = np.einsum("bte,btf->ef", Y1, dpre)
    dbf1 = dpre.sum(axis=(0, 1))
    dY1 = dR2 + dpre @ wf1.T

    dR1, dg1, dc1 = _layer_norm_back(dY1, xhat1, rstd1, g1)
    dwo = np.einsum("bti,btj->ij", O, dR1)
    dbo = dR1.sum(axis=(0, 1))
    dOh = _split_heads(dR1 @ wo.T, n_heads)
    Qh, Kh, Vh = _split_heads(Q, n_heads), _split_heads(K, n_heads), _split_heads(V, n_heads)
    dA = dOh @ Vh.transpose(0, 1, 3, 2)
    dVh = A.transpose(0, 1, 3, 2) @ dOh
    dS = A * (dA - (dA * A).sum(axis=-1, keepdims=True)) / np.sqrt(dh)
    dQ = _merge_heads(dS @ Kh)
    dK = _merge_heads(dS.transpose(0, 1, 3, 2) @ Qh)
    dV = _merge_heads(dVh)
    dwq = np.einsum("bti,btj->ij", X, dQ)
    dwk = np.einsum("bti,btj->ij", X, dK)
    dwv = np.einsum("bti,btj->ij", X, dV)
    dX = dR1 + dQ @ wq.T + dK @ wk.T + dV @ wv.T
    return dX, (dwq, dwk, dwv, dwo, dbo, dg1, dc1, dwf1, dbf1, dwf2, dbf2, dg2, dc2)
