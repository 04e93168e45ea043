"""Time the numba and numpy kernel paths, then one full training step with each.

    python3 benchmarks/bench_kernels.py [--repeat 50] [--batch 32] [--J 22] [--H 128]

Setting MTGCN_DISABLE_NUMBA=1 leaves only the numpy columns.
"""

import argparse
import time

import numpy as np

from mtgcn import kernels
from mtgcn.gradcheck import chain_skeleton
from mtgcn.model import Model, ModelConfig
from mtgcn.optim import Adam
from mtgcn.train import Batch, TrainConfig, observed_bone_lengths, train_step


def best_of(fn, repeat):
    fn()  # warm-up (and jit compile)
    best = float("inf")
    for _ in range(repeat):
        t0 = time.perf_counter()
        fn()
        best = min(best, time.perf_counter() - t0)
    return best


def kernel_cases(rng, B, J, H):
    N = 3 * J
    A = rng.uniform(-1, 1, (J, 3, 3))
    V = rng.normal(size=(B, J, 3, H))
    G = rng.normal(size=(B, J, 3, H))
    X = rng.normal(size=(B, N, H))
    mu, var = kernels.bn_stats(X, use_numba=False)
    inv = 1 / np.sqrt(var + 1e-5)
    xhat = (X - mu[None, :, None]) * inv[None, :, None]
    gamma = np.ones(N)
    P = rng.normal(size=(B, J, 3, 10))
    r = kernels.group3_norm(P, use_numba=False)
    g = rng.normal(size=r.shape)
    return [
        ("local_mix", lambda u: kernels.local_mix(A, V, use_numba=u)),
        ("local_mix_backward", lambda u: kernels.local_mix_backward(A, V, G, use_numba=u)),
        ("bn_stats", lambda u: kernels.bn_stats(X, use_numba=u)),
        ("bn_backward", lambda u: kernels.bn_backward(X, xhat, gamma, inv, use_numba=u)),
        ("group3_norm", lambda u: kernels.group3_norm(P, use_numba=u)),
        ("group3_norm_backward", lambda u: kernels.group3_norm_backward(P, r, g, use_numba=u)),
    ]


def step_timer(rng, B, J, H, repeat):
    cfg = ModelConfig(J=J, T=10, T_out=10, H=H, L=4)
    spec = chain_skeleton(J)
    x = rng.normal(size=(B, cfg.N, cfg.T))
    batch = Batch(x, rng.normal(size=(B, cfg.N, cfg.T_out)), observed_bone_lengths(x, spec))

    def run(use_numba):
        saved = kernels.HAVE_NUMBA
        kernels.HAVE_NUMBA = use_numba
        try:
            model = Model(cfg, seed=0)
            opt = Adam(model.params())
            return best_of(lambda: train_step(model, batch, spec, TrainConfig(), opt, 1e-3), repeat)
        finally:
            kernels.HAVE_NUMBA = saved
    return run


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--repeat", type=int, default=50)
    ap.add_argument("--batch", type=int, default=32)
    ap.add_argument("--J", type=int, default=22)
    ap.add_argument("--H", type=int, default=128)
    args = ap.parse_args()
    rng = np.random.default_rng(0)
    paths = [False] + ([True] if kernels.HAVE_NUMBA else [])

    print(f"batch={args.batch} J={args.J} H={args.H} numba={'on' if kernels.HAVE_NUMBA else 'off'}")
    print(f"{'kernel':<24}{'numpy ms':>12}{'numba ms':>12}{'speedup':>10}")
    for name, fn in kernel_cases(rng, args.batch, args.J, args.H):
        t = [best_of(lambda: fn(u), args.repeat) * 1e3 for u in paths]
        if len(t) == 2:
            print(f"{name:<24}{t[0]:12.3f}{t[1]:12.3f}{t[0] / t[1]:10.2f}")
        else:
            print(f"{name:<24}{t[0]:12.3f}{'-':>12}{'-':>10}")

    run = step_timer(rng, args.batch, args.J, args.H, max(3, args.repeat // 10))
    t = [run(u) * 1e3 for u in paths]
    if len(t) == 2:
        print(f"{'train_step (L=4)':<24}{t[0]:12.2f}{t[1]:12.2f}{t[0] / t[1]:10.2f}")
    else:
        print(f"{'train_step (L=4)':<24}{t[0]:12.2f}{'-':>12}{'-':>10}")


if __name__ == "__main__":
    main()
