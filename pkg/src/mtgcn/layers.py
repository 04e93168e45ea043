"""Trajectory graph convolutions with learnable adjacencies.

All three layers map hidden features of width H to width H and emit rows in
joint-major sub-joint order (joint 0 x, joint 0 y, joint 0 z, joint 1 x, ...).
Leading batch axes are supported.
"""

import numpy as np

from . import autodiff as ad
from .autodiff import ShapeError, Tensor


def _rng(seed):
    if isinstance(seed, np.random.Generator):
        return seed
    return np.random.default_rng(seed)


def uniform_fan_in(rng, shape, fan_in, name=None):
    bound = 1.0 / np.sqrt(fan_in)
    return Tensor(rng.uniform(-bound, bound, size=shape), requires_grad=True, name=name)


class JTGCLayer:
    """Joint-level graph convolution: one J x J adjacency shared by x, y and z."""

    kind = "jtgc"

    def __init__(self, A, W):
        self.A = A
        self.W = W

    @property
    def J(self):
        return self.A.shape[0]

    @property
    def H(self):
        return self.W.shape[0]

    def params(self):
        return [self.A, self.W]

    def __call__(self, V):
        return jtgc_forward(V, self)


class GSTGCLayer:
    """Graph convolution over all N = 3J sub-joint trajectories."""

    kind = "gstgc"

    def __init__(self, A, W):
        self.A = A
        self.W = W

    @property
    def N(self):
        return self.A.shape[0]

    @property
    def H(self):
        return self.W.shape[0]

    def params(self):
        return [self.A, self.W]

    def __call__(self, V):
        return gstgc_forward(V, self)


class LSTGCLayer:
    """Per-joint 3 x 3 graph convolution over a joint's own x/y/z trajectories.

    ``A`` stacks the J local adjacencies as one (J, 3, 3) tensor; ``W`` is
    shared by all joints.
    """

    kind = "lstgc"

    def __init__(self, A, W):
        self.A = A
        self.W = W

    @property
    def J(self):
        return self.A.shape[0]

    @property
    def H(self):
        return self.W.shape[0]

    def params(self):
        return [self.A, self.W]

    def __call__(self, V):
        return lstgc_forward(V, self)


def init_layer(kind, dims, seed):
    """Build a layer with U(-1/sqrt(fan_in), 1/sqrt(fan_in)) entries.

    ``dims`` is (J, H) for "jtgc" and "lstgc" and (N, H) for "gstgc".
    ``seed`` may be an int or a numpy Generator (consumed in place).
    """
    n, H = dims
    if n <= 0 or H <= 0:
        raise ValueError(f"layer dims must be positive, got {dims}")
    rng = _rng(seed)
    if kind == "jtgc":
        return JTGCLayer(uniform_fan_in(rng, (n, n), n, "A_jt"),
                         uniform_fan_in(rng, (H, H), H, "W_jt"))
    if kind == "gstgc":
        return GSTGCLayer(uniform_fan_in(rng, (n, n), n, "A_gs"),
                          uniform_fan_in(rng, (H, H), H, "W_gs"))
    if kind == "lstgc":
        return LSTGCLayer(uniform_fan_in(rng, (n, 3, 3), 3, "A_ls"),
                          uniform_fan_in(rng, (H, H), H, "W_ls"))
    raise ValueError(f"unknown layer kind {kind!r}")


def _check_joint_input(V, J, H, who):
    if V.data.ndim < 3 or V.shape[-3:] != (J, 3, H):
        raise ShapeError(f"{who} expects (..., {J}, 3, {H}), got {V.shape}")


def jtgc_forward(V, layer):
    """(..., J, 3, H) -> (..., 3J, H); row 3i+d holds joint i, axis d."""
    V = ad.as_tensor(V)
    J, H = layer.J, layer.H
    _check_joint_input(V, J, H, "jtgc")
    lead = V.shape[:-3]
    # A acts on the joint axis of every (axis, feature) column at once
    X = ad.reshape(V, lead + (J, 3 * H))
    X = ad.matmul(layer.A, X)
    X = ad.reshape(X, lead + (3 * J, H))
    return ad.matmul(X, layer.W)


def gstgc_forward(V, layer):
    V = ad.as_tensor(V)
    N, H = layer.N, layer.H
    if V.data.ndim < 2 or V.shape[-2:] != (N, H):
        raise ShapeError(f"gstgc expects (..., {N}, {H}), got {V.shape}")
    return ad.matmul(ad.matmul(layer.A, V), layer.W)


def lstgc_forward(V, layer):
    V = ad.as_tensor(V)
    J, H = layer.J, layer.H
    _check_joint_input(V, J, H, "lstgc")
    lead = V.shape[:-3]
    X = ad.reshape(V, (-1, J, 3, H))
    X = ad.local_mix(layer.A, X)
    X = ad.reshape(X, lead + (3 * J, H))
    return ad.matmul(X, layer.W)


def jtgc_concat_forward(V, layer):
    """Literal per-axis form: concat over axes of A @ V[:, d, :] @ W, then
    re-permuted from axis-major to joint-major rows.  Numerically equal to
    :func:`jtgc_forward`; kept for cross-checking.
    """
    V = ad.as_tensor(V)
    J, H = layer.J, layer.H
    _check_joint_input(V, J, H, "jtgc")
    lead = V.shape[:-3]
    blocks = [ad.matmul(ad.matmul(layer.A, ad.slice_axis(V, d, V.data.ndim - 2)), layer.W)
              for d in range(3)]
    Y = ad.concat_rows(blocks)  # (..., 3J, H), axis-major
    Y = ad.reshape(Y, lead + (3, J, H))
    nd = len(lead)
    axes = tuple(range(nd)) + (nd + 1, nd, nd + 2)
    Y = ad.transpose(Y, axes)
    return ad.reshape(Y, lead + (3 * J, H))
