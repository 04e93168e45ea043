import os
import subprocess
import sys

import numpy as np
import pytest

from mtgcn import kernels

paths = [False] + ([True] if kernels.HAVE_NUMBA else [])


@pytest.fixture(params=paths, ids=lambda p: "numba" if p else "numpy")
def use_numba(request):
    return request.param


def test_local_mix_matches_loops(rng, use_numba):
    A = rng.uniform(-1, 1, (3, 3, 3))
    V = rng.uniform(-1, 1, (2, 3, 3, 4))
    out = kernels.local_mix(A, V, use_numba)
    ref = np.zeros_like(V)
    for b in range(2):
        for j in range(3):
            ref[b, j] = A[j] @ V[b, j]
    np.testing.assert_allclose(out, ref, atol=1e-14)


def test_paths_agree(rng):
    if not kernels.HAVE_NUMBA:
        pytest.skip("numba unavailable")
    A = rng.uniform(-1, 1, (5, 3, 3))
    V = rng.uniform(-1, 1, (4, 5, 3, 6))
    G = rng.uniform(-1, 1, (4, 5, 3, 6))
    for f, args in [(kernels.local_mix, (A, V)), (kernels.local_mix_backward, (A, V, G)),
                    (kernels.bn_stats, (V.reshape(4, 15, 6),)),
                    (kernels.group3_norm, (V,))]:
        a, b = f(*args, use_numba=True), f(*args, use_numba=False)
        a, b = (a, b) if isinstance(a, tuple) else ((a,), (b,))
        for x, y in zip(a, b):
            np.testing.assert_allclose(x, y, atol=1e-13)
    X = V.reshape(4, 15, 6)
    mu, var = kernels.bn_stats(X, use_numba=False)
    inv = 1 / np.sqrt(var + 1e-5)
    xhat = (X - mu[None, :, None]) * inv[None, :, None]
    gamma = rng.uniform(0.5, 1.5, 15)
    Gx = G.reshape(4, 15, 6)
    for x, y in zip(kernels.bn_backward(Gx, xhat, gamma, inv, use_numba=True),
                    kernels.bn_backward(Gx, xhat, gamma, inv, use_numba=False)):
        np.testing.assert_allclose(x, y, atol=1e-12)
    r = kernels.group3_norm(V)
    np.testing.assert_allclose(kernels.group3_norm_backward(V, r, G[:, :, 0], use_numba=True),
                               kernels.group3_norm_backward(V, r, G[:, :, 0], use_numba=False),
                               atol=1e-14)


def test_zero_norm_has_zero_subgradient(use_numba):
    X = np.zeros((1, 2, 3, 2))
    r = kernels.group3_norm(X, use_numba)
    g = kernels.group3_norm_backward(X, r, np.ones((1, 2, 2)), use_numba)
    assert np.array_equal(g, np.zeros_like(X))


def test_env_flag_disables_numba():
    code = "import mtgcn.kernels as k; print(k.HAVE_NUMBA)"
    env = dict(os.environ, MTGCN_DISABLE_NUMBA="1")
    out = subprocess.run([sys.executable, "-c", code], env=env, capture_output=True, text=True)
    assert out.stdout.strip() == "False"


def test_forcing_missing_numba_raises(monkeypatch):
    monkeypatch.setattr(kernels, "HAVE_NUMBA", False)
    with pytest.raises(RuntimeError):
        kernels.local_mix(np.zeros((1, 3, 3)), np.zeros((1, 1, 3, 1)), use_numba=True)
