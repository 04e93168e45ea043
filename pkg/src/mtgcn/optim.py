import math

import numpy as np


def global_norm(grads):
    # fixed order: iteration order of the input sequence
    sq = 0.0
    for g in grads:
        sq += float(np.dot(g.ravel(), g.ravel()))
    return math.sqrt(sq)


def clip_gradients_l2(grads, max_norm=1.0):
    """Rescale a list of gradient arrays so their joint L2 norm is at most ``max_norm``.

    Returns ``(clipped, pre_clip_norm)``.  Arrays are returned unchanged (same
    objects) when no clipping is needed.
    """
    if max_norm <= 0:
        raise ValueError(f"max_norm must be positive, got {max_norm}")
    grads = list(grads)
    norm = global_norm(grads)
    # slack of a few ulps so an already-clipped set is left untouched
    if norm <= max_norm * (1.0 + 1e-14):
        return grads, norm
    factor = max_norm / norm
    return [g * factor for g in grads], norm


class AdamState:
    def __init__(self, shapes, beta1=0.9, beta2=0.999, eps=1e-8):
        self.m = [np.zeros(s) for s in shapes]
        self.v = [np.zeros(s) for s in shapes]
        self.t = 0
        self.beta1 = beta1
        self.beta2 = beta2
        self.eps = eps


class Adam:
    """Adam with bias correction, updating parameter arrays in place."""

    def __init__(self, params, beta1=0.9, beta2=0.999, eps=1e-8):
        self.params = list(params)
        self.state = AdamState([p.shape for p in self.params], beta1, beta2, eps)

    def step(self, grads, lr):
        adam_step(self.params, grads, self.state, lr)


def adam_step(params, grads, state, lr):
    """One Adam update of ``params`` (Tensors or arrays) in place."""
    if lr <= 0:
        raise ValueError(f"learning rate must be positive, got {lr}")
    if len(params) != len(grads) or len(params) != len(state.m):
        raise ValueError("params, grads and optimizer state differ in length")
    state.t += 1
    b1, b2, t = state.beta1, state.beta2, state.t
    c1 = 1.0 - b1 ** t
    c2 = 1.0 - b2 ** t
    for i, (p, g) in enumerate(zip(params, grads)):
        data = p if isinstance(p, np.ndarray) else p.data
        if data.shape != g.shape or g.shape != state.m[i].shape:
            raise ValueError(f"shape mismatch at parameter {i}: {data.shape} vs {g.shape}")
        m = state.m[i] = b1 * state.m[i] + (1.0 - b1) * g
        v = state.v[i] = b2 * state.v[i] + (1.0 - b2) * (g * g)
        data -= lr * (m / c1) / (np.sqrt(v / c2) + state.eps)
