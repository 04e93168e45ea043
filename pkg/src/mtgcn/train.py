"""Loss, batching and the optimization loop."""

import csv
import logging
import math
from dataclasses import dataclass

import numpy as np

from . import autodiff as ad
from .autodiff import ShapeError, Tape
from .augment import mirror_permutation
from .model import model_forward
from .optim import Adam, clip_gradients_l2
from .skeleton import bone_lengths

log = logging.getLogger(__name__)


class TrainingError(RuntimeError):
    pass


@dataclass
class TrainConfig:
    batch_size: int = 32
    lr0: float = 0.001
    lr_decay: float = 0.98
    clip_norm: float = 1.0
    lam: float = 0.1
    epochs: int = 50
    seed: int = 0
    augment_mirror: bool = True
    use_bone_loss: bool = True

    def __post_init__(self):
        if self.batch_size <= 0 or self.epochs < 0:
            raise ValueError("batch_size must be positive and epochs non-negative")
        if self.lr0 < 0 or self.lr_decay <= 0 or self.clip_norm <= 0:
            raise ValueError("lr0 must be >= 0; lr_decay and clip_norm positive")
        if self.lam < 0:
            raise ValueError(f"bone-loss weight must be >= 0, got {self.lam}")


# ---------------------------------------------------------------------------
# losses

def _joint_view(x, who):
    if x.data.ndim != 3 or x.shape[1] % 3:
        raise ShapeError(f"{who} expects (batch, 3J, T), got {x.shape}")
    B, N, T = x.shape
    return ad.reshape(x, (B, N // 3, 3, T))


def mpjpe_loss(pred, gt):
    """Mean joint position error over batch, joints and frames."""
    pred, gt = ad.as_tensor(pred), ad.as_tensor(gt)
    if pred.shape != gt.shape:
        raise ShapeError(f"prediction {pred.shape} and target {gt.shape} differ")
    diff = _joint_view(ad.sub(pred, gt), "mpjpe_loss")
    return ad.mean(ad.joint_norms(diff))


def bone_length_loss(pred, gt_lengths, spec):
    """Mean absolute deviation of predicted bone lengths from ``gt_lengths`` (batch, B)."""
    pred = ad.as_tensor(pred)
    P = _joint_view(pred, "bone_length_loss")
    if P.shape[1] != spec.J:
        raise ShapeError(f"prediction has {P.shape[1]} joints, skeleton has {spec.J}")
    gt_lengths = np.asarray(gt_lengths, dtype=np.float64)
    if not spec.bones:
        return ad.Tensor(np.asarray(0.0))
    idx = np.asarray(spec.bones, dtype=np.intp)
    d = ad.sub(ad.take(P, idx[:, 0], axis=1), ad.take(P, idx[:, 1], axis=1))
    lengths = ad.joint_norms(d)  # (batch, B, T')
    return ad.mean(ad.absolute(ad.sub(lengths, gt_lengths[:, :, None])))


def total_loss(pred, gt, gt_lengths, spec, lam=0.1):
    """Returns (total, mpjpe term, bone term)."""
    if lam < 0:
        raise ValueError(f"bone-loss weight must be >= 0, got {lam}")
    mp = mpjpe_loss(pred, gt)
    if lam == 0:
        return mp, mp, ad.Tensor(np.asarray(0.0))
    bone = bone_length_loss(pred, gt_lengths, spec)
    return ad.add(mp, ad.scale(bone, lam)), mp, bone


def lr_at_epoch(epoch, cfg):
    if epoch < 0:
        raise ValueError(f"epoch must be >= 0, got {epoch}")
    return cfg.lr0 * cfg.lr_decay ** epoch


# ---------------------------------------------------------------------------
# data

@dataclass
class Batch:
    inputs: np.ndarray       # (batch, N, T)
    targets: np.ndarray      # (batch, N, T_out)
    gt_lengths: np.ndarray   # (batch, B)

    def __len__(self):
        return self.inputs.shape[0]


class WindowDataset:
    """Observed/future window pairs in sub-joint row layout."""

    def __init__(self, inputs, targets, spec, actions=None, gt_lengths=None):
        self.inputs = np.asarray(inputs, dtype=np.float64)
        self.targets = np.asarray(targets, dtype=np.float64)
        self.spec = spec
        n = self.inputs.shape[0]
        if self.targets.shape[0] != n:
            raise ShapeError("inputs and targets disagree on sample count")
        self.actions = list(actions) if actions is not None else ["unlabeled"] * n
        if gt_lengths is None:
            gt_lengths = observed_bone_lengths(self.inputs, spec)
        self.gt_lengths = np.asarray(gt_lengths, dtype=np.float64)

    def __len__(self):
        return self.inputs.shape[0]

    def mirrored(self):
        perm = mirror_permutation(self.spec)
        return WindowDataset(_mirror_rows(self.inputs, perm), _mirror_rows(self.targets, perm),
                             self.spec, self.actions)

    def with_mirror(self):
        m = self.mirrored()
        return WindowDataset(np.concatenate([self.inputs, m.inputs]),
                             np.concatenate([self.targets, m.targets]),
                             self.spec, self.actions + m.actions,
                             np.concatenate([self.gt_lengths, m.gt_lengths]))


def _mirror_rows(x, perm):
    S, N, T = x.shape
    j = x.reshape(S, N // 3, 3, T)[:, perm].copy()
    j[:, :, 0, :] = -j[:, :, 0, :]
    return j.reshape(S, N, T)


def observed_bone_lengths(inputs, spec):
    """Per-sample bone lengths averaged over the observed frames."""
    S, N, T = inputs.shape
    frames = np.transpose(inputs.reshape(S, N // 3, 3, T), (0, 3, 1, 2))  # (S, T, J, 3)
    return bone_lengths(frames, spec).mean(axis=1)


def extract_windows(sequences, T, T_out, stride=None, spec=None):
    """Sliding windows of T observed + T_out future frames from each sequence."""
    stride = stride or T_out
    xs, ys, acts = [], [], []
    for seq in sequences:
        m = seq.data.reshape(seq.J * 3, seq.T)
        for start in range(0, seq.T - (T + T_out) + 1, stride):
            xs.append(m[:, start:start + T])
            ys.append(m[:, start + T:start + T + T_out])
            acts.append(seq.action or "unlabeled")
    if not xs:
        shortest = min(sequences, key=lambda s: s.T).T if sequences else 0
        raise ValueError(f"no usable windows: need sequences of at least {T + T_out} frames, "
                         f"shortest has {shortest}")
    spec = spec or sequences[0].spec
    return WindowDataset(np.stack(xs), np.stack(ys), spec, acts)


def make_batches(dataset, cfg, epoch):
    """Shuffled batches for one epoch, deterministic in (cfg.seed, epoch)."""
    if len(dataset) == 0:
        raise ValueError("dataset is empty")
    if cfg.augment_mirror:
        dataset = dataset.with_mirror()
    order = np.random.default_rng([cfg.seed, epoch]).permutation(len(dataset))
    out = []
    for s in range(0, len(order), cfg.batch_size):
        idx = order[s:s + cfg.batch_size]
        out.append(Batch(dataset.inputs[idx], dataset.targets[idx], dataset.gt_lengths[idx]))
    return out


# ---------------------------------------------------------------------------

@dataclass
class EpochRecord:
    epoch: int
    lr: float
    total_loss: float
    mpjpe_term: float
    bone_term: float


def train_step(model, batch, spec, cfg, optimizer, lr, step=0):
    params = optimizer.params
    with Tape() as tape:
        pred = model_forward(batch.inputs, model, train=True)
        lam = cfg.lam if cfg.use_bone_loss else 0.0
        loss, mp, bone = total_loss(pred, batch.targets, batch.gt_lengths, spec, lam)
    value = float(loss.data)
    if not math.isfinite(value):
        raise TrainingError(f"non-finite loss {value} at step {step}")
    grads = ad.backward(tape, loss, params)
    g, _ = clip_gradients_l2([grads[p] for p in params], cfg.clip_norm)
    if lr > 0:
        optimizer.step(g, lr)
    return value, float(mp.data), float(bone.data)


def train(model, dataset, cfg, spec=None, callback=None):
    """Run ``cfg.epochs`` epochs; returns the per-epoch log."""
    spec = spec or dataset.spec
    optimizer = Adam(model.params())
    history = []
    step = 0
    for epoch in range(cfg.epochs):
        lr = lr_at_epoch(epoch, cfg)
        sums = np.zeros(3)
        batches = make_batches(dataset, cfg, epoch)
        for batch in batches:
            sums += train_step(model, batch, spec, cfg, optimizer, lr, step)
            step += 1
        rec = EpochRecord(epoch, lr, *(sums / len(batches)))
        history.append(rec)
        if callback is not None:
            callback(rec)
        log.debug("epoch %d lr %.3g loss %.6g", epoch, lr, rec.total_loss)
    return history


def write_metric_log(history, path):
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["epoch", "lr", "total_loss", "mpjpe_term", "bone_term"])
        for r in history:
            w.writerow([r.epoch, repr(r.lr), repr(r.total_loss), repr(r.mpjpe_term), repr(r.bone_term)])
