"""Skeleton topology, motion sequences and trajectory reshaping."""

from dataclasses import dataclass, field

import numpy as np


class SkeletonError(ValueError):
    pass


@dataclass(frozen=True)
class SkeletonSpec:
    """Joint count, bone tree, left/right joint pairs and hip joint.

    ``facing_pair`` overrides the (left, right) joints used to find the
    body's facing direction; by default it is the first symmetric pair whose
    joints both attach to the hip by a bone.
    """

    J: int
    bones: tuple
    symmetric_pairs: tuple = ()
    hip_index: int = 0
    fps: int = 25
    facing_pair: tuple = None

    def __post_init__(self):
        object.__setattr__(self, "bones", tuple(tuple(int(i) for i in b) for b in self.bones))
        object.__setattr__(self, "symmetric_pairs",
                           tuple(tuple(int(i) for i in p) for p in self.symmetric_pairs))
        self.validate()

    @property
    def N(self):
        return 3 * self.J

    @property
    def B(self):
        return len(self.bones)

    def validate(self):
        J = self.J
        if J < 1:
            raise SkeletonError(f"joint count must be positive, got {J}")
        if not 0 <= self.hip_index < J:
            raise SkeletonError(f"hip index {self.hip_index} outside [0, {J})")
        if self.fps <= 0:
            raise SkeletonError(f"fps must be positive, got {self.fps}")
        for a, b in self.bones:
            if not (0 <= a < J and 0 <= b < J) or a == b:
                raise SkeletonError(f"bad bone ({a}, {b}) for J={J}")
        if len(self.bones) != J - 1:
            raise SkeletonError(f"a tree over {J} joints needs {J - 1} bones, got {len(self.bones)}")
        # connectivity with J-1 edges implies a tree
        reached = {self.hip_index}
        frontier = [self.hip_index]
        adj = {i: [] for i in range(J)}
        for a, b in self.bones:
            adj[a].append(b)
            adj[b].append(a)
        while frontier:
            i = frontier.pop()
            for k in adj[i]:
                if k not in reached:
                    reached.add(k)
                    frontier.append(k)
        if len(reached) != J:
            raise SkeletonError("bone graph is not connected")
        used = set()
        for l, r in self.symmetric_pairs:
            if not (0 <= l < J and 0 <= r < J):
                raise SkeletonError(f"symmetric pair ({l}, {r}) out of range")
            if l == r:
                raise SkeletonError(f"symmetric pair ({l}, {r}) pairs a joint with itself")
            if l in used or r in used:
                raise SkeletonError(f"joint repeated in symmetric pairs: ({l}, {r})")
            used.update((l, r))
        if self.facing_pair is not None:
            l, r = self.facing_pair
            if not (0 <= l < J and 0 <= r < J) or l == r:
                raise SkeletonError(f"bad facing pair {self.facing_pair}")

    def resolve_facing_pair(self):
        if self.facing_pair is not None:
            return tuple(self.facing_pair)
        hip_nbrs = {b if a == self.hip_index else a
                    for a, b in self.bones if self.hip_index in (a, b)}
        for l, r in self.symmetric_pairs:
            if l in hip_nbrs and r in hip_nbrs:
                return (l, r)
        if self.symmetric_pairs:
            return self.symmetric_pairs[0]
        return None

    def parents(self):
        """Parent index per joint in the tree rooted at the hip (-1 for the hip)."""
        parent = [-1] * self.J
        adj = {i: [] for i in range(self.J)}
        for a, b in self.bones:
            adj[a].append(b)
            adj[b].append(a)
        order = [self.hip_index]
        seen = {self.hip_index}
        for i in order:
            for k in sorted(adj[i]):
                if k not in seen:
                    seen.add(k)
                    parent[k] = i
                    order.append(k)
        return parent, order


def parse_skeleton(text):
    """Parse the line-oriented skeleton format (J/FPS/HIP/BONE/SYM/FACE)."""
    J = fps = None
    hip = 0
    bones, pairs, facing = [], [], None
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        key, *args = line.split()
        try:
            vals = [int(a) for a in args]
        except ValueError:
            raise SkeletonError(f"line {lineno}: non-integer argument in {raw!r}") from None
        want = {"J": 1, "FPS": 1, "HIP": 1, "BONE": 2, "SYM": 2, "FACE": 2}.get(key.upper())
        if want is None:
            raise SkeletonError(f"line {lineno}: unknown key {key!r}")
        if len(vals) != want:
            raise SkeletonError(f"line {lineno}: {key} takes {want} integer(s)")
        key = key.upper()
        if key == "J":
            J = vals[0]
        elif key == "FPS":
            fps = vals[0]
        elif key == "HIP":
            hip = vals[0]
        elif key == "BONE":
            bones.append(tuple(vals))
        elif key == "SYM":
            pairs.append(tuple(vals))
        else:
            facing = tuple(vals)
    if J is None:
        raise SkeletonError("skeleton file has no J line")
    return SkeletonSpec(J=J, bones=tuple(bones), symmetric_pairs=tuple(pairs),
                        hip_index=hip, fps=fps if fps is not None else 25,
                        facing_pair=facing)


def load_skeleton(path):
    with open(path, encoding="utf-8") as fh:
        return parse_skeleton(fh.read())


def format_skeleton(spec):
    lines = [f"J {spec.J}", f"FPS {spec.fps}", f"HIP {spec.hip_index}"]
    lines += [f"BONE {a} {b}" for a, b in spec.bones]
    lines += [f"SYM {l} {r}" for l, r in spec.symmetric_pairs]
    if spec.facing_pair is not None:
        lines.append(f"FACE {spec.facing_pair[0]} {spec.facing_pair[1]}")
    return "\n".join(lines) + "\n"


@dataclass
class MotionSequence:
    """Joint trajectories as a (J, 3, T) array, in millimetres."""

    data: np.ndarray
    fps: int = 25
    spec: SkeletonSpec = None
    action: str = None
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        self.data = np.asarray(self.data, dtype=np.float64)
        if self.data.ndim != 3 or self.data.shape[1] != 3 or self.data.shape[2] < 1:
            raise SkeletonError(f"motion data must be (J, 3, T>=1), got {self.data.shape}")
        if self.spec is not None and self.spec.J != self.data.shape[0]:
            raise SkeletonError(f"sequence has {self.data.shape[0]} joints, skeleton has {self.spec.J}")
        if not np.all(np.isfinite(self.data)):
            raise SkeletonError("motion data contains non-finite values")

    @property
    def J(self):
        return self.data.shape[0]

    @property
    def T(self):
        return self.data.shape[2]

    def frames(self):
        """(T, J, 3) view ordered by frame."""
        return np.transpose(self.data, (2, 0, 1))

    @classmethod
    def from_frames(cls, frames, **kw):
        return cls(np.ascontiguousarray(np.transpose(np.asarray(frames, dtype=np.float64), (1, 2, 0))), **kw)

    def replace(self, data, **kw):
        args = dict(fps=self.fps, spec=self.spec, action=self.action, meta=dict(self.meta))
        args.update(kw)
        return MotionSequence(data, **args)


def _rot_z(theta):
    c, s = np.cos(theta), np.sin(theta)
    return np.array([[c, -s, 0.0], [s, c, 0.0], [0.0, 0.0, 1.0]])


def facing_rotation(frame, spec, tol=1e-12):
    """Rotation about z taking the left->right hip direction onto +x.

    Returns None when the hips coincide in the ground plane.
    """
    pair = spec.resolve_facing_pair()
    if pair is None:
        return None
    l, r = pair
    d = frame[r] - frame[l]
    if np.hypot(d[0], d[1]) <= tol:
        return None
    return _rot_z(-np.arctan2(d[1], d[0]))


def canonicalize(seq, spec=None):
    """Put the hip at the origin every frame and face the body along +y.

    One rotation about the vertical axis, found from the first frame, is
    applied to all frames.  If the facing direction is degenerate the
    rotation is skipped and ``meta['facing_degenerate']`` is set.
    """
    spec = spec or seq.spec
    if spec is None:
        raise SkeletonError("canonicalize needs a skeleton spec")
    frames = seq.frames()  # (T, J, 3)
    centered = frames - frames[:, spec.hip_index:spec.hip_index + 1, :]
    R = facing_rotation(centered[0], spec)
    meta = dict(seq.meta)
    if R is None:
        meta["facing_degenerate"] = True
        out = centered
    else:
        meta.pop("facing_degenerate", None)
        out = centered @ R.T
        # exact zeros for the hip survive the rotation; keep it so
        out[:, spec.hip_index, :] = 0.0
    return MotionSequence.from_frames(out, fps=seq.fps, spec=seq.spec, action=seq.action, meta=meta)


def to_global_subjoint(seq):
    """(N, T) matrix with rows (joint0 x, joint0 y, joint0 z, joint1 x, ...)."""
    data = seq.data if isinstance(seq, MotionSequence) else np.asarray(seq)
    return data.reshape(data.shape[0] * 3, data.shape[2])


def from_global_subjoint(m, spec=None, fps=None, action=None):
    m = np.asarray(m, dtype=np.float64)
    if m.ndim != 2 or m.shape[0] % 3:
        raise SkeletonError(f"sub-joint matrix needs a row count divisible by 3, got {m.shape}")
    if fps is None:
        fps = spec.fps if spec is not None else 25
    return MotionSequence(m.reshape(m.shape[0] // 3, 3, m.shape[1]), fps=fps, spec=spec, action=action)


def bone_lengths(frame, spec):
    """Length of every bone in a (J, 3) frame (or (..., J, 3) stack)."""
    frame = np.asarray(frame, dtype=np.float64)
    idx = np.asarray(spec.bones, dtype=np.intp).reshape(-1, 2)
    d = frame[..., idx[:, 0], :] - frame[..., idx[:, 1], :]
    return np.sqrt((d * d).sum(axis=-1))


def ms_to_frame(ms, fps):
    """Number of future frames reached after ``ms`` milliseconds."""
    if ms <= 0:
        raise ValueError(f"horizon must be positive, got {ms} ms")
    # round half up; avoids banker's rounding on exact .5
    k = int(np.floor(ms * fps / 1000.0 + 0.5))
    if k == 0:
        raise ValueError(f"{ms} ms at {fps} fps is less than one frame")
    return k
