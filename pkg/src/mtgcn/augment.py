"""Left/right mirror augmentation of canonical skeleton motion."""

import numpy as np

from .skeleton import MotionSequence


def mirror_permutation(spec_or_pairs, J=None):
    """Joint permutation exchanging every symmetric (left, right) pair.

    Built as a product of row transpositions of the identity; the result is
    an involution because the pairs are disjoint.
    """
    if J is None:
        J = spec_or_pairs.J
        pairs = spec_or_pairs.symmetric_pairs
    else:
        pairs = spec_or_pairs
    perm = np.arange(J)
    for l, r in pairs:
        perm[[l, r]] = perm[[r, l]]
    return perm


def mirror_reflect(frame):
    """Reflect coordinates across the yOz plane (negate x)."""
    out = np.array(frame, dtype=np.float64, copy=True)
    out[..., 0] = -out[..., 0]
    return out


def swap_symmetric(frame, perm):
    """Row i of the result is row ``perm[i]`` of ``frame`` (joint axis -2)."""
    return np.asarray(frame)[..., perm, :]


def mirror_transform(seq, spec=None):
    """Reflect then relabel left/right joints, frame by frame."""
    spec = spec or seq.spec
    perm = mirror_permutation(spec)
    frames = swap_symmetric(mirror_reflect(seq.frames()), perm)
    meta = dict(seq.meta)
    meta["mirrored"] = not meta.get("mirrored", False)
    return MotionSequence.from_frames(frames, fps=seq.fps, spec=seq.spec, action=seq.action, meta=meta)


def augment_dataset(sequences, spec):
    """Originals followed by their mirrored copies (twice the size)."""
    sequences = list(sequences)
    return sequences + [mirror_transform(s, spec) for s in sequences]
