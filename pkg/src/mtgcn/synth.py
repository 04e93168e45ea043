"""Smooth periodic synthetic motion for desk-scale experiments."""

import numpy as np

from .skeleton import MotionSequence, SkeletonSpec, canonicalize


def toy_skeleton(fps=25):
    """8-joint stick figure: hip, two legs of two joints, spine, two hands.

      0 hip, 1 l_hip, 2 r_hip, 3 l_knee, 4 r_knee, 5 spine, 6 l_hand, 7 r_hand
    """
    return SkeletonSpec(
        J=8,
        bones=((0, 1), (0, 2), (1, 3), (2, 4), (0, 5), (5, 6), (5, 7)),
        symmetric_pairs=((1, 2), (3, 4), (6, 7)),
        hip_index=0,
        fps=fps,
    )


def _rest_pose(spec, rng):
    """Unit rest directions and bone lengths, mirror-symmetric across x = 0."""
    parent, order = spec.parents()
    partner = {}
    for l, r in spec.symmetric_pairs:
        partner[l] = (r, 1.0)
        partner[r] = (l, -1.0)
    dirs = np.zeros((spec.J, 3))
    length = np.zeros(spec.J)
    done = set()
    for j in order[1:]:
        if j in done:
            continue
        d = rng.normal(size=3)
        if j in partner:
            other, side = partner[j]
            d[0] = -side * abs(d[0]) - side * 0.5  # left joints sit at -x
            dirs[j] = d / np.linalg.norm(d)
            dirs[other] = dirs[j] * np.array([-1.0, 1.0, 1.0])
            length[j] = length[other] = rng.uniform(0.5, 1.0)
            done.update((j, other))
        else:
            d[0] = 0.0
            dirs[j] = d / np.linalg.norm(d)
            length[j] = rng.uniform(0.5, 1.0)
            done.add(j)
    return parent, order, dirs, length


def synth_sequence(spec, length, rng, scale=1.0, amplitude=0.3, rest=None):
    """One sequence of ``length`` frames with constant bone lengths."""
    parent, order, dirs, blen = rest if rest is not None else _rest_pose(spec, rng)
    J, fps = spec.J, spec.fps
    t = np.arange(length) / fps
    # 2-3 sinusoids per sub-joint direction component
    wobble = np.zeros((J, 3, length))
    for j in range(J):
        for d in range(3):
            for _ in range(rng.integers(2, 4)):
                f = rng.uniform(0.3, 1.5)
                phase = rng.uniform(0.0, 2 * np.pi)
                amp = amplitude * rng.uniform(0.3, 1.0)
                wobble[j, d] += amp * np.sin(2 * np.pi * f * t + phase)
    pos = np.zeros((length, J, 3))
    for j in order[1:]:
        d = dirs[j][:, None] + wobble[j]              # (3, T)
        d = d / np.linalg.norm(d, axis=0, keepdims=True)
        pos[:, j, :] = pos[:, parent[j], :] + scale * blen[j] * d.T
    seq = MotionSequence.from_frames(pos, fps=fps, spec=spec, action="synthetic")
    return canonicalize(seq, spec)


def synth_dataset(spec, count, length, seed=0, scale=1.0, amplitude=0.3):
    """``count`` sequences sharing one rest skeleton, reproducible from ``seed``."""
    rng = np.random.default_rng(seed)
    rest = _rest_pose(spec, rng)
    return [synth_sequence(spec, length, rng, scale, amplitude, rest) for _ in range(count)]
