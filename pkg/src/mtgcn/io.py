"""Sequence files and flat key=value config files."""

import os

import numpy as np

from .skeleton import MotionSequence


class FormatError(ValueError):
    pass


def format_sequence(seq):
    """Header ``J <J> T <T> FPS <fps> [ACTION <word>]`` then one line per frame."""
    head = f"J {seq.J} T {seq.T} FPS {seq.fps}"
    if seq.action:
        if any(c.isspace() for c in seq.action):
            raise FormatError(f"action label must be one word, got {seq.action!r}")
        head += f" ACTION {seq.action}"
    lines = [head]
    for frame in seq.frames():  # (J, 3) joint-major x y z
        lines.append(" ".join("%.17g" % v for v in frame.ravel()))
    return "\n".join(lines) + "\n"


def parse_sequence(text, spec=None, source="<string>"):
    lines = [ln for ln in text.split("\n") if ln.strip()]
    if not lines:
        raise FormatError(f"{source}: empty sequence file")
    tok = lines[0].split()
    fields = {}
    i = 0
    while i < len(tok):
        key = tok[i].upper()
        if key not in ("J", "T", "FPS", "ACTION") or i + 1 >= len(tok):
            raise FormatError(f"{source}: bad header {lines[0]!r}")
        fields[key] = tok[i + 1]
        i += 2
    try:
        J, T, fps = int(fields["J"]), int(fields["T"]), int(fields["FPS"])
    except (KeyError, ValueError):
        raise FormatError(f"{source}: header needs integer J, T and FPS: {lines[0]!r}") from None
    if J <= 0 or T <= 0 or fps <= 0:
        raise FormatError(f"{source}: header values must be positive: {lines[0]!r}")
    body = lines[1:]
    if len(body) != T:
        raise FormatError(f"{source}: header says T={T} but file has {len(body)} data lines")
    frames = np.empty((T, J * 3))
    for t, ln in enumerate(body):
        parts = ln.split()
        if len(parts) != 3 * J:
            raise FormatError(f"{source}: line {t + 2} has {len(parts)} values, expected {3 * J}")
        try:
            frames[t] = [float(p) for p in parts]
        except ValueError:
            raise FormatError(f"{source}: line {t + 2} has a non-numeric value") from None
    if spec is not None and spec.J != J:
        raise FormatError(f"{source}: sequence has J={J}, skeleton has J={spec.J}")
    try:
        return MotionSequence.from_frames(frames.reshape(T, J, 3), fps=fps, spec=spec,
                                          action=fields.get("ACTION"))
    except ValueError as e:
        raise FormatError(f"{source}: {e}") from None


def read_sequence(path, spec=None):
    with open(path, encoding="utf-8") as fh:
        return parse_sequence(fh.read(), spec, source=str(path))


def write_sequence(seq, path):
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(format_sequence(seq))


def list_sequence_files(data_dir, suffix=".seq"):
    return sorted(os.path.join(data_dir, f) for f in os.listdir(data_dir) if f.endswith(suffix))


def parse_config(text, source="<string>"):
    """Flat ``key = value`` lines; ``#`` starts a comment."""
    out = {}
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise FormatError(f"{source}:{lineno}: expected key=value, got {raw!r}")
        key, value = (s.strip() for s in line.split("=", 1))
        if not key:
            raise FormatError(f"{source}:{lineno}: empty key")
        out[key] = value
    return out


def read_config(path):
    with open(path, encoding="utf-8") as fh:
        return parse_config(fh.read(), source=str(path))
