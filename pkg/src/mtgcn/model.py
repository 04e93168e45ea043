"""Multi-grained trajectory GCN: blocks, full model and checkpoint I/O."""

import struct
from dataclasses import dataclass

import numpy as np

from . import autodiff as ad
from .autodiff import BatchNormState, ShapeError, Tensor
from .layers import GSTGCLayer, JTGCLayer, LSTGCLayer, init_layer, uniform_fan_in

FLAG_GLOBAL_RESIDUAL = 1


@dataclass(frozen=True)
class ModelConfig:
    J: int
    T: int = 10
    T_out: int = 10
    H: int = 128
    L: int = 4
    use_global_residual: bool = False

    def __post_init__(self):
        for k in ("J", "T", "T_out", "H"):
            if getattr(self, k) <= 0:
                raise ValueError(f"{k} must be positive, got {getattr(self, k)}")
        if self.L < 0:
            raise ValueError(f"L must be non-negative, got {self.L}")

    @property
    def N(self):
        return 3 * self.J

    @property
    def flags(self):
        return FLAG_GLOBAL_RESIDUAL if self.use_global_residual else 0


class MTGCM:
    """Batch norm, two graph streams fused by sum + tanh, and a residual.

    sub-joint stream:  gstgc2(tanh(gstgc1(Z)))
    joint stream:      jtgc(tanh(lstgc(Z as J x 3 x H)))
    """

    def __init__(self, J, H, rng):
        N = 3 * J
        self.J, self.N, self.H = J, N, H
        self.gamma = Tensor(np.ones(N), requires_grad=True, name="bn_gamma")
        self.beta = Tensor(np.zeros(N), requires_grad=True, name="bn_beta")
        self.bn = BatchNormState(N)
        self.gs1 = init_layer("gstgc", (N, H), rng)
        self.gs2 = init_layer("gstgc", (N, H), rng)
        self.ls = init_layer("lstgc", (J, H), rng)
        self.jt = init_layer("jtgc", (J, H), rng)

    def params(self):
        return [self.gamma, self.beta,
                self.gs1.A, self.gs2.A, self.gs1.W, self.gs2.W,
                self.ls.A, self.ls.W, self.jt.A, self.jt.W]

    def named_params(self):
        names = ["bn_gamma", "bn_beta", "A_gs1", "A_gs2", "W_gs1", "W_gs2",
                 "A_ls", "W_ls", "A_jt", "W_jt"]
        return list(zip(names, self.params()))

    def __call__(self, X, train=True):
        return mtgcm_forward(X, self, train)


def mtgcm_forward(X, block, train=True):
    X = ad.as_tensor(X)
    if X.data.ndim != 3 or X.shape[1:] != (block.N, block.H):
        raise ShapeError(f"MTGCM expects (batch, {block.N}, {block.H}), got {X.shape}")
    B = X.shape[0]
    Z = ad.batch_norm(X, block.gamma, block.beta, block.bn, train=train)
    S = block.gs2(ad.tanh(block.gs1(Z)))
    Zj = ad.reshape(Z, (B, block.J, 3, block.H))
    Y = ad.tanh(block.ls(Zj))
    Js = block.jt(ad.reshape(Y, (B, block.J, 3, block.H)))
    return ad.add(ad.tanh(ad.add(S, Js)), X)


class Model:
    def __init__(self, config, seed=0):
        self.config = config
        rng = np.random.default_rng(seed)
        c = config
        self.W_in = uniform_fan_in(rng, (c.T, c.H), c.T, "W_in")
        self.blocks = [MTGCM(c.J, c.H, rng) for _ in range(c.L)]
        self.W_out = uniform_fan_in(rng, (c.H, c.T_out), c.H, "W_out")

    def params(self):
        out = [self.W_in]
        for b in self.blocks:
            out += b.params()
        out.append(self.W_out)
        return out

    def named_params(self):
        out = [("W_in", self.W_in)]
        for i, b in enumerate(self.blocks):
            out += [(f"block{i}.{n}", p) for n, p in b.named_params()]
        out.append(("W_out", self.W_out))
        return out

    def __call__(self, F, train=False):
        return model_forward(F, self, train)

    def predict(self, F):
        """Eval-mode prediction on a plain array, returns a plain array."""
        F = np.asarray(F, dtype=np.float64)
        single = F.ndim == 2
        if single:
            F = F[None]
        out = model_forward(F, self, train=False).data
        return out[0] if single else out


def model_forward(F, model, train=False):
    """(batch, N, T) observed trajectories -> (batch, N, T_out) prediction."""
    F = ad.as_tensor(F)
    c = model.config
    if F.data.ndim != 3 or F.shape[1] != c.N:
        raise ShapeError(f"model expects (batch, {c.N}, {c.T}), got {F.shape}")
    if F.shape[2] != c.T:
        raise ShapeError(f"input has {F.shape[2]} frames, W_in expects T={c.T}")
    E = ad.matmul(F, model.W_in)
    for block in model.blocks:
        E = mtgcm_forward(E, block, train)
    out = ad.matmul(E, model.W_out)
    if c.use_global_residual:
        last = Tensor(F.data[:, :, -1:])
        out = ad.add(out, last)
    return out


def param_formula(config):
    c = config
    N, H, J = c.N, c.H, c.J
    block = 2 * (N * N + H * H) + (9 * J + H * H) + (J * J + H * H) + 2 * N
    return c.T * H + c.L * block + H * c.T_out


def count_params(model):
    """Number of stored learnable entries (see :func:`param_formula`)."""
    return sum(p.size for p in model.params())


# ---------------------------------------------------------------------------
# checkpoints

MAGIC = b"MTGC"
FORMAT_VERSION = 1
_HEADER = struct.Struct("<6i")


class CheckpointError(ValueError):
    def __init__(self, message, offset=None):
        self.offset = offset
        if offset is not None:
            message = f"{message} (at byte offset {offset})"
        super().__init__(message)


def _state_arrays(model):
    # declared on-disk order
    out = [model.W_in.data]
    for b in model.blocks:
        out += [b.gamma.data, b.beta.data, b.bn.running_mean, b.bn.running_var,
                b.gs1.A.data, b.gs2.A.data, b.gs1.W.data, b.gs2.W.data]
        out += [b.ls.A.data[j] for j in range(b.J)]
        out += [b.ls.W.data, b.jt.A.data, b.jt.W.data]
    out.append(model.W_out.data)
    return out


def save_checkpoint(model, path):
    c = model.config
    with open(path, "wb") as fh:
        fh.write(MAGIC)
        fh.write(bytes([FORMAT_VERSION]))
        fh.write(_HEADER.pack(c.J, c.T, c.T_out, c.H, c.L, c.flags))
        for arr in _state_arrays(model):
            fh.write(np.ascontiguousarray(arr, dtype="<f8").tobytes())


def load_checkpoint(path, expect=None):
    """Read a checkpoint; ``expect`` (a ModelConfig) is checked if given."""
    with open(path, "rb") as fh:
        raw = fh.read()
    if len(raw) < 4 or raw[:4] != MAGIC:
        raise CheckpointError(f"bad magic {raw[:4]!r}, expected {MAGIC!r}", offset=0)
    if len(raw) < 5:
        raise CheckpointError("truncated before format version", offset=4)
    if raw[4] != FORMAT_VERSION:
        raise CheckpointError(f"unsupported format version {raw[4]}", offset=4)
    if len(raw) < 5 + _HEADER.size:
        raise CheckpointError("truncated config header", offset=len(raw))
    J, T, T_out, H, L, flags = _HEADER.unpack_from(raw, 5)
    try:
        config = ModelConfig(J=J, T=T, T_out=T_out, H=H, L=L,
                             use_global_residual=bool(flags & FLAG_GLOBAL_RESIDUAL))
    except ValueError as e:
        raise CheckpointError(f"invalid config in header: {e}", offset=5) from None
    if expect is not None:
        _check_compatible(config, expect)

    model = Model(config, seed=0)
    offset = 5 + _HEADER.size
    for arr in _state_arrays(model):
        nbytes = arr.size * 8
        if offset + nbytes > len(raw):
            raise CheckpointError(
                f"truncated parameter data: need {nbytes} bytes, {len(raw) - offset} left",
                offset=offset)
        arr[...] = np.frombuffer(raw, dtype="<f8", count=arr.size, offset=offset).reshape(arr.shape)
        offset += nbytes
    if offset != len(raw):
        raise CheckpointError(f"{len(raw) - offset} trailing bytes", offset=offset)
    return model, config


def _check_compatible(got, want):
    diffs = [f"{k}: file {getattr(got, k)} != requested {getattr(want, k)}"
             for k in ("J", "T", "T_out", "H", "L", "use_global_residual")
             if getattr(got, k) != getattr(want, k)]
    if diffs:
        raise CheckpointError("checkpoint incompatible with requested config; " + "; ".join(diffs))
