"""MPJPE at fixed future horizons, aggregated per action."""

import csv
from dataclasses import dataclass

import numpy as np

from .model import count_params
from .skeleton import ms_to_frame

DEFAULT_HORIZONS_MS = (80, 160, 320, 400)
LONG_HORIZONS_MS = (560, 1000)


def mpjpe_at_horizon(pred, gt, frame):
    """Mean joint error of (N, T_out) trajectories at 1-based future ``frame``."""
    pred = np.asarray(pred, dtype=np.float64)
    gt = np.asarray(gt, dtype=np.float64)
    if pred.shape != gt.shape or pred.ndim != 2 or pred.shape[0] % 3:
        raise ValueError(f"expected matching (3J, T_out) arrays, got {pred.shape} and {gt.shape}")
    T_out = pred.shape[1]
    if not 1 <= frame <= T_out:
        raise ValueError(f"frame {frame} outside [1, {T_out}]")
    d = (pred[:, frame - 1] - gt[:, frame - 1]).reshape(-1, 3)
    return float(np.sqrt((d * d).sum(axis=1)).mean())


@dataclass
class EvalReport:
    horizons_ms: list
    rows: dict          # action -> list of MPJPE per horizon
    average: list
    n_params: int
    counts: dict = None

    def to_csv(self, path):
        with open(path, "w", newline="", encoding="utf-8") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["action", "horizon_ms", "mpjpe_mm"])
            for action, vals in list(self.rows.items()) + [("average", self.average)]:
                for h, v in zip(self.horizons_ms, vals):
                    w.writerow([action, h, repr(float(v))])

    def to_table(self):
        width = max([len("average")] + [len(a) for a in self.rows]) + 2
        head = "action".ljust(width) + "".join(f"{h:>10}" for h in self.horizons_ms)
        lines = [head, "-" * len(head)]
        for action, vals in list(self.rows.items()) + [("average", self.average)]:
            if action == "average":
                lines.append("-" * len(head))
            lines.append(action.ljust(width) + "".join(f"{v:10.3f}" for v in vals))
        lines.append(f"#params: {self.n_params}")
        return "\n".join(lines) + "\n"


def evaluate(model, dataset, horizons_ms=DEFAULT_HORIZONS_MS, fps=None):
    """Eval-mode MPJPE per action label and horizon over a WindowDataset."""
    fps = fps or dataset.spec.fps
    T_out = model.config.T_out
    horizons = sorted(horizons_ms)
    frames = []
    for h in horizons:
        k = ms_to_frame(h, fps)
        if k > T_out:
            raise ValueError(f"horizon {h} ms is frame {k} at {fps} fps, beyond T_out={T_out}")
        frames.append(k)

    pred = model.predict(dataset.inputs)
    sums, counts = {}, {}
    for i, action in enumerate(dataset.actions):
        errs = [mpjpe_at_horizon(pred[i], dataset.targets[i], k) for k in frames]
        if action not in sums:
            sums[action] = np.zeros(len(frames))
            counts[action] = 0
        sums[action] += errs
        counts[action] += 1
    rows = {a: list(sums[a] / counts[a]) for a in sorted(sums)}
    average = list(np.mean([rows[a] for a in rows], axis=0)) if rows else []
    return EvalReport(horizons, rows, average, count_params(model), counts)
