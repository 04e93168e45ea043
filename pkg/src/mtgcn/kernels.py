"""Small numeric kernels with a numba path and a pure-numpy path.

The numba path is used when numba imports and ``MTGCN_DISABLE_NUMBA`` is unset
(or "0").  Both paths compute the same quantities; they are not required to
agree bitwise, only within floating-point round-off.  Each path is
deterministic on its own.
"""

import os

import numpy as np


def _numba_requested():
    flag = os.environ.get("MTGCN_DISABLE_NUMBA", "0").strip().lower()
    return flag in ("", "0", "false", "no")


try:
    if not _numba_requested():
        raise ImportError("numba disabled by MTGCN_DISABLE_NUMBA")
    from numba import njit
    HAVE_NUMBA = True
except ImportError:
    HAVE_NUMBA = False


# ---------------------------------------------------------------------------
# numpy reference path

def _np_local_mix(A, V):
    # A: (J, 3, 3), V: (B, J, 3, H) -> out[b, j] = A[j] @ V[b, j]
    return np.einsum("jde,bjeh->bjdh", A, V, optimize=False)


def _np_local_mix_backward(A, V, G):
    dA = np.einsum("bjdh,bjeh->jde", G, V, optimize=False)
    dV = np.einsum("jde,bjdh->bjeh", A, G, optimize=False)
    return dA, dV


def _np_bn_stats(X):
    # per-feature mean/biased variance over batch and hidden axes
    mean = X.mean(axis=(0, 2))
    var = ((X - mean[None, :, None]) ** 2).mean(axis=(0, 2))
    return mean, var


def _np_bn_backward(G, xhat, gamma, inv_std):
    m = G.shape[0] * G.shape[2]
    dbeta = G.sum(axis=(0, 2))
    dgamma = (G * xhat).sum(axis=(0, 2))
    dxhat = G * gamma[None, :, None]
    dX = (inv_std / m)[None, :, None] * (
        m * dxhat
        - dxhat.sum(axis=(0, 2))[None, :, None]
        - xhat * (dxhat * xhat).sum(axis=(0, 2))[None, :, None]
    )
    return dX, dgamma, dbeta


def _np_group3_norm(X):
    # X: (B, J, 3, T) -> (B, J, T)
    return np.sqrt((X * X).sum(axis=2))


def _np_group3_norm_backward(X, norms, G):
    safe = np.where(norms > 0.0, norms, 1.0)
    scale = np.where(norms > 0.0, G / safe, 0.0)
    return X * scale[:, :, None, :]


# ---------------------------------------------------------------------------
# numba path

if HAVE_NUMBA:

    @njit(cache=True)
    def _nb_local_mix(A, V):
        B, J, _, H = V.shape
        out = np.zeros((B, J, 3, H))
        for b in range(B):
            for j in range(J):
                for d in range(3):
                    for e in range(3):
                        a = A[j, d, e]
                        for h in range(H):
                            out[b, j, d, h] += a * V[b, j, e, h]
        return out

    @njit(cache=True)
    def _nb_local_mix_backward(A, V, G):
        B, J, _, H = V.shape
        dA = np.zeros((J, 3, 3))
        dV = np.zeros((B, J, 3, H))
        for b in range(B):
            for j in range(J):
                for d in range(3):
                    for e in range(3):
                        a = A[j, d, e]
                        s = 0.0
                        for h in range(H):
                            g = G[b, j, d, h]
                            s += g * V[b, j, e, h]
                            dV[b, j, e, h] += a * g
                        dA[j, d, e] += s
        return dA, dV

    @njit(cache=True)
    def _nb_bn_stats(X):
        B, N, H = X.shape
        m = B * H
        mean = np.zeros(N)
        var = np.zeros(N)
        for n in range(N):
            s = 0.0
            for b in range(B):
                for h in range(H):
                    s += X[b, n, h]
            mu = s / m
            q = 0.0
            for b in range(B):
                for h in range(H):
                    d = X[b, n, h] - mu
                    q += d * d
            mean[n] = mu
            var[n] = q / m
        return mean, var

    @njit(cache=True)
    def _nb_bn_backward(G, xhat, gamma, inv_std):
        B, N, H = G.shape
        m = B * H
        dX = np.empty((B, N, H))
        dgamma = np.zeros(N)
        dbeta = np.zeros(N)
        for n in range(N):
            sg = 0.0
            sgx = 0.0
            for b in range(B):
                for h in range(H):
                    g = G[b, n, h]
                    sg += g
                    sgx += g * xhat[b, n, h]
            dbeta[n] = sg
            dgamma[n] = sgx
            k = gamma[n] * inv_std[n] / m
            for b in range(B):
                for h in range(H):
                    dX[b, n, h] = k * (m * G[b, n, h] - sg - xhat[b, n, h] * sgx)
        return dX, dgamma, dbeta

    @njit(cache=True)
    def _nb_group3_norm(X):
        B, J, _, T = X.shape
        out = np.empty((B, J, T))
        for b in range(B):
            for j in range(J):
                for t in range(T):
                    x = X[b, j, 0, t]
                    y = X[b, j, 1, t]
                    z = X[b, j, 2, t]
                    out[b, j, t] = np.sqrt(x * x + y * y + z * z)
        return out

    @njit(cache=True)
    def _nb_group3_norm_backward(X, norms, G):
        B, J, _, T = X.shape
        out = np.zeros((B, J, 3, T))
        for b in range(B):
            for j in range(J):
                for t in range(T):
                    r = norms[b, j, t]
                    if r > 0.0:
                        s = G[b, j, t] / r
                        for d in range(3):
                            out[b, j, d, t] = X[b, j, d, t] * s
        return out


def _contig(*arrays):
    return tuple(np.ascontiguousarray(a, dtype=np.float64) for a in arrays)


def local_mix(A, V, use_numba=None):
    """Per-joint 3x3 mixing: ``out[b, j] = A[j] @ V[b, j]``."""
    if _pick(use_numba):
        return _nb_local_mix(*_contig(A, V))
    return _np_local_mix(A, V)


def local_mix_backward(A, V, G, use_numba=None):
    if _pick(use_numba):
        return _nb_local_mix_backward(*_contig(A, V, G))
    return _np_local_mix_backward(A, V, G)


def bn_stats(X, use_numba=None):
    if _pick(use_numba):
        return _nb_bn_stats(*_contig(X))
    return _np_bn_stats(X)


def bn_backward(G, xhat, gamma, inv_std, use_numba=None):
    """Input/affine gradients of per-feature normalization over axes (0, 2)."""
    if _pick(use_numba):
        return _nb_bn_backward(*_contig(G, xhat, gamma, inv_std))
    return _np_bn_backward(G, xhat, gamma, inv_std)


def group3_norm(X, use_numba=None):
    """Euclidean norm over axis 2 (length 3) of a (B, J, 3, T) array."""
    if _pick(use_numba):
        return _nb_group3_norm(*_contig(X))
    return _np_group3_norm(X)


def group3_norm_backward(X, norms, G, use_numba=None):
    # subgradient 0 where the norm vanishes
    if _pick(use_numba):
        return _nb_group3_norm_backward(*_contig(X, norms, G))
    return _np_group3_norm_backward(X, norms, G)


def _pick(use_numba):
    if use_numba is None:
        return HAVE_NUMBA
    if use_numba and not HAVE_NUMBA:
        raise RuntimeError("numba path requested but numba is unavailable or disabled")
    return bool(use_numba)
