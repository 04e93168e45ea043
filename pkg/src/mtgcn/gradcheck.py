"""Central finite differences against tape gradients, per parameter group."""

from dataclasses import dataclass

import numpy as np

from . import autodiff as ad
from .model import Model, ModelConfig, model_forward
from .skeleton import SkeletonSpec
from .train import observed_bone_lengths, total_loss

TINY_LIMITS = {"J": 4, "H": 8, "T": 5}


@dataclass
class GroupResult:
    name: str
    size: int
    max_rel_err: float
    passed: bool


def chain_skeleton(J):
    """Joint 0 as hip with a chain; joints 1 and 2 mirrored when J >= 3."""
    if J < 3:
        bones = tuple((i, i + 1) for i in range(J - 1))
        return SkeletonSpec(J=J, bones=bones)
    bones = ((0, 1), (0, 2)) + tuple((i, i + 1) for i in range(2, J - 1))
    return SkeletonSpec(J=J, bones=bones, symmetric_pairs=((1, 2),))


def relative_error(analytic, numeric, floor=1e-7):
    """Entrywise |a - n| / max(|a|, |n|, floor), maximised over the group."""
    a = np.asarray(analytic).ravel()
    n = np.asarray(numeric).ravel()
    denom = np.maximum(np.maximum(np.abs(a), np.abs(n)), floor)
    return float(np.max(np.abs(a - n) / denom)) if a.size else 0.0


def _loss_fn(model, spec, inputs, targets, gt_lengths, lam):
    def loss():
        pred = model_forward(inputs, model, train=True)
        return total_loss(pred, targets, gt_lengths, spec, lam)[0]
    return loss


def check_model(model, spec, inputs, targets, lam=0.1, eps=1e-5, tol=1e-4):
    """Compare backward() with central differences for every named group."""
    gt_lengths = observed_bone_lengths(inputs, spec)
    loss = _loss_fn(model, spec, inputs, targets, gt_lengths, lam)
    saved = [(b.bn.running_mean.copy(), b.bn.running_var.copy()) for b in model.blocks]

    named = model.named_params()
    with ad.Tape() as tape:
        out = loss()
    grads = ad.backward(tape, out, [p for _, p in named])

    results = []
    for name, p in named:
        flat = p.data.reshape(-1)
        numeric = np.empty(flat.size)
        for i in range(flat.size):
            orig = flat[i]
            flat[i] = orig + eps
            up = float(loss().data)
            flat[i] = orig - eps
            down = float(loss().data)
            flat[i] = orig
            numeric[i] = (up - down) / (2 * eps)
        err = relative_error(grads[p], numeric)
        results.append(GroupResult(name, flat.size, err, err < tol))

    for b, (mu, var) in zip(model.blocks, saved):
        b.bn.running_mean, b.bn.running_var = mu, var
    return results


def run_gradcheck(config, seed=0, batch=3, spec=None, lam=0.1, tol=1e-4):
    for k, limit in TINY_LIMITS.items():
        if getattr(config, k) > limit:
            raise ValueError(f"gradcheck needs a tiny config: {k}={getattr(config, k)} > {limit}")
    spec = spec or chain_skeleton(config.J)
    if spec.J != config.J:
        raise ValueError(f"skeleton has J={spec.J}, config has J={config.J}")
    rng = np.random.default_rng(seed)
    model = Model(config, seed=seed)
    # random in [-1, 1]: keeps every parameter group away from zero
    for p in model.params():
        p.data[...] = rng.uniform(-1.0, 1.0, size=p.shape)
    inputs = rng.uniform(-1.0, 1.0, size=(batch, config.N, config.T))
    targets = rng.uniform(-1.0, 1.0, size=(batch, config.N, config.T_out))
    return check_model(model, spec, inputs, targets, lam=lam, tol=tol)


def format_results(results):
    width = max(len(r.name) for r in results)
    lines = [f"{r.name.ljust(width)}  n={r.size:<5d} max_rel_err={r.max_rel_err:.3e}  "
             f"{'PASS' if r.passed else 'FAIL'}" for r in results]
    return "\n".join(lines) + "\n"
