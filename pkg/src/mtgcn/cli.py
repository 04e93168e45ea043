"""Command-line interface: train, predict, eval, gradcheck, synth, augment, params."""

import argparse
import dataclasses
import logging
import os
import sys

import numpy as np

from .augment import mirror_transform
from .autodiff import ShapeError
from .evaluate import DEFAULT_HORIZONS_MS, evaluate
from .gradcheck import chain_skeleton, format_results, run_gradcheck
from .io import FormatError, list_sequence_files, read_config, read_sequence, write_sequence
from .model import CheckpointError, Model, ModelConfig, count_params, load_checkpoint, save_checkpoint
from .skeleton import SkeletonError, canonicalize, format_skeleton, from_global_subjoint, load_skeleton
from .synth import synth_dataset, toy_skeleton
from .train import TrainConfig, TrainingError, extract_windows, train, write_metric_log

log = logging.getLogger("mtgcn")

EXIT_OK, EXIT_VALIDATION, EXIT_RUNTIME = 0, 1, 2


@dataclasses.dataclass
class RunConfig:
    # model
    T: int = 10
    T_out: int = 10
    H: int = 128
    L: int = 4
    use_global_residual: bool = False
    # training
    batch_size: int = 32
    lr0: float = 0.001
    lr_decay: float = 0.98
    clip_norm: float = 1.0
    lam: float = 0.1
    epochs: int = 50
    seed: int = 0
    augment_mirror: bool = True
    use_bone_loss: bool = True
    stride: int = 0
    # paths
    skeleton: str = ""
    data_dir: str = ""
    checkpoint: str = ""
    out: str = ""
    report: str = ""
    metric_log: str = ""

    def model_config(self, J):
        return ModelConfig(J=J, T=self.T, T_out=self.T_out, H=self.H, L=self.L,
                           use_global_residual=self.use_global_residual)

    def train_config(self):
        return TrainConfig(batch_size=self.batch_size, lr0=self.lr0, lr_decay=self.lr_decay,
                           clip_norm=self.clip_norm, lam=self.lam, epochs=self.epochs,
                           seed=self.seed, augment_mirror=self.augment_mirror,
                           use_bone_loss=self.use_bone_loss)

    def dump(self):
        return "".join(f"{f.name}={getattr(self, f.name)}\n" for f in dataclasses.fields(self))


def _coerce(field, value):
    if field.type in (bool, "bool"):
        v = str(value).strip().lower()
        if v in ("1", "true", "yes", "on"):
            return True
        if v in ("0", "false", "no", "off"):
            return False
        raise ValueError(f"{field.name}: expected a boolean, got {value!r}")
    if field.type in (int, "int"):
        return int(value)
    if field.type in (float, "float"):
        return float(value)
    return str(value)


def resolve_config(args):
    """Defaults, then the --config file, then explicit flags."""
    cfg = RunConfig()
    fields = {f.name: f for f in dataclasses.fields(RunConfig)}
    if getattr(args, "config", None):
        for key, value in read_config(args.config).items():
            if key not in fields:
                raise ValueError(f"unknown config key {key!r} in {args.config}")
            setattr(cfg, key, _coerce(fields[key], value))
    for key, f in fields.items():
        value = getattr(args, key, None)
        if value is not None:
            setattr(cfg, key, _coerce(f, value))
    return cfg


def _skeleton(cfg, J=None):
    if cfg.skeleton:
        return load_skeleton(cfg.skeleton)
    if J is None or J == 8:
        return toy_skeleton()
    return chain_skeleton(J)


def _load_windows(cfg, spec, T, T_out):
    if not cfg.data_dir:
        raise ValueError("--data is required")
    files = list_sequence_files(cfg.data_dir)
    if not files:
        raise ValueError(f"no .seq files in {cfg.data_dir}")
    seqs = [canonicalize(read_sequence(f, spec), spec) for f in files]
    return extract_windows(seqs, T, T_out, cfg.stride or T_out, spec)


# ---------------------------------------------------------------------------
# commands

def cmd_train(cfg):
    spec = _skeleton(cfg)
    mcfg = cfg.model_config(spec.J)
    tcfg = cfg.train_config()
    ds = _load_windows(cfg, spec, mcfg.T, mcfg.T_out)
    n = len(ds) * (2 if tcfg.augment_mirror else 1)
    log.info("windows: %d, samples per epoch: %d", len(ds), n)
    model = Model(mcfg, seed=cfg.seed)
    history = train(model, ds, tcfg, spec,
                    callback=lambda r: log.info("epoch %d lr %.6g loss %.6g", r.epoch, r.lr, r.total_loss))
    out = cfg.out or "model.ckpt"
    save_checkpoint(model, out)
    write_metric_log(history, cfg.metric_log or out + ".csv")
    log.info("checkpoint written to %s", out)
    return EXIT_OK


def cmd_predict(cfg, input_path):
    model, mcfg = load_checkpoint(cfg.checkpoint)
    seq = read_sequence(input_path)
    if seq.J != mcfg.J:
        raise ValueError(f"input has J={seq.J}, checkpoint expects J={mcfg.J}")
    if seq.T < mcfg.T:
        raise ValueError(f"input has {seq.T} frames, model needs at least T={mcfg.T}")
    F = seq.data.reshape(mcfg.N, seq.T)[:, -mcfg.T:]
    pred = model.predict(F)
    out = from_global_subjoint(pred, fps=seq.fps, action=seq.action)
    write_sequence(out, cfg.out or "prediction.seq")
    return EXIT_OK


def cmd_eval(cfg, horizons):
    model, mcfg = load_checkpoint(cfg.checkpoint)
    spec = _skeleton(cfg, mcfg.J)
    ds = _load_windows(cfg, spec, mcfg.T, mcfg.T_out)
    report = evaluate(model, ds, horizons, spec.fps)
    report.to_csv(cfg.out or "report.csv")
    table = report.to_table()
    if cfg.report:
        with open(cfg.report, "w", encoding="utf-8") as fh:
            fh.write(table)
    sys.stdout.write(table)
    return EXIT_OK


def cmd_gradcheck(cfg, J):
    mcfg = ModelConfig(J=J, T=cfg.T, T_out=cfg.T_out, H=cfg.H, L=cfg.L,
                       use_global_residual=cfg.use_global_residual)
    spec = load_skeleton(cfg.skeleton) if cfg.skeleton else None
    results = run_gradcheck(mcfg, seed=cfg.seed, spec=spec, lam=cfg.lam)
    sys.stdout.write(format_results(results))
    return EXIT_OK if all(r.passed for r in results) else EXIT_RUNTIME


def cmd_synth(cfg, count, length, scale, amplitude):
    spec = _skeleton(cfg)
    out = cfg.out or "synth"
    os.makedirs(out, exist_ok=True)
    seqs = synth_dataset(spec, count, length, seed=cfg.seed, scale=scale, amplitude=amplitude)
    width = len(str(max(count - 1, 0)))
    for i, s in enumerate(seqs):
        write_sequence(s, os.path.join(out, f"synth_{i:0{width}d}.seq"))
    if not cfg.skeleton:
        with open(os.path.join(out, "skeleton.txt"), "w", encoding="utf-8") as fh:
            fh.write(format_skeleton(spec))
    return EXIT_OK


def cmd_augment(cfg):
    spec = _skeleton(cfg)
    if not cfg.data_dir:
        raise ValueError("--data is required")
    out_dir = cfg.out or cfg.data_dir
    os.makedirs(out_dir, exist_ok=True)
    failed = 0
    for path in list_sequence_files(cfg.data_dir):
        try:
            seq = read_sequence(path, spec)
        except (FormatError, SkeletonError) as e:
            log.warning("skipping %s: %s", path, e)
            failed += 1
            continue
        stem = os.path.splitext(os.path.basename(path))[0]
        write_sequence(mirror_transform(seq, spec), os.path.join(out_dir, stem + "_mt.seq"))
    return EXIT_VALIDATION if failed else EXIT_OK


def cmd_params(cfg, J):
    if cfg.checkpoint:
        model, _ = load_checkpoint(cfg.checkpoint)
        n = count_params(model)
    else:
        from .model import param_formula
        n = param_formula(cfg.model_config(J))
    print(n)
    return EXIT_OK


# ---------------------------------------------------------------------------

def _add_common(p):
    p.add_argument("--config", help="flat key=value config file")
    p.add_argument("--seed", type=int)
    p.add_argument("--skeleton", help="skeleton spec file")
    p.add_argument("--out", help="output path")
    p.add_argument("-v", "--verbose", action="store_true")


def _add_model(p):
    p.add_argument("--T", type=int, dest="T")
    p.add_argument("--T-out", type=int, dest="T_out")
    p.add_argument("--H", type=int, dest="H")
    p.add_argument("--L", type=int, dest="L")
    p.add_argument("--global-residual", dest="use_global_residual",
                   action="store_const", const="1")


def build_parser():
    parser = argparse.ArgumentParser(prog="mtgcn", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("train", help="train a model on a directory of sequence files")
    _add_common(p)
    _add_model(p)
    p.add_argument("--data", dest="data_dir")
    p.add_argument("--epochs", type=int)
    p.add_argument("--batch-size", type=int, dest="batch_size")
    p.add_argument("--lr", type=float, dest="lr0")
    p.add_argument("--lr-decay", type=float, dest="lr_decay")
    p.add_argument("--clip", type=float, dest="clip_norm")
    p.add_argument("--lam", type=float)
    p.add_argument("--stride", type=int)
    p.add_argument("--augment", dest="augment_mirror", action="store_const", const="1")
    p.add_argument("--no-augment", dest="augment_mirror", action="store_const", const="0")
    p.add_argument("--no-bone-loss", dest="use_bone_loss", action="store_const", const="0")
    p.add_argument("--metric-log", dest="metric_log")

    p = sub.add_parser("predict", help="predict future frames for one sequence file")
    _add_common(p)
    p.add_argument("--checkpoint", required=True)
    p.add_argument("input")

    p = sub.add_parser("eval", help="MPJPE report at future horizons")
    _add_common(p)
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--data", dest="data_dir", required=True)
    p.add_argument("--stride", type=int)
    p.add_argument("--horizons", default=",".join(map(str, DEFAULT_HORIZONS_MS)),
                   help="comma-separated milliseconds")
    p.add_argument("--table", dest="report", help="write the plain-text table here too")

    p = sub.add_parser("gradcheck", help="finite-difference check of every parameter group")
    _add_common(p)
    _add_model(p)
    p.add_argument("--J", type=int, default=4)
    p.add_argument("--lam", type=float)

    p = sub.add_parser("synth", help="write synthetic sequences")
    _add_common(p)
    p.add_argument("--count", type=int, default=20)
    p.add_argument("--length", type=int, default=40)
    p.add_argument("--scale", type=float, default=1.0, help="bone length multiplier")
    p.add_argument("--amplitude", type=float, default=0.3)

    p = sub.add_parser("augment", help="write mirrored copies (_mt suffix) of sequence files")
    _add_common(p)
    p.add_argument("--data", dest="data_dir", required=True)

    p = sub.add_parser("params", help="print the learnable parameter count")
    _add_common(p)
    _add_model(p)
    p.add_argument("--J", type=int, default=22)
    p.add_argument("--checkpoint")
    return parser


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.INFO,
                        format="%(levelname)s %(message)s", stream=sys.stderr)
    if args.command == "gradcheck":
        # tiny defaults unless overridden
        for k, v in (("T", 5), ("T_out", 3), ("H", 8), ("L", 2)):
            if getattr(args, k) is None:
                setattr(args, k, v)
    try:
        cfg = resolve_config(args)
        sys.stderr.write("# resolved config\n" + cfg.dump())
        if args.command == "train":
            return cmd_train(cfg)
        if args.command == "predict":
            return cmd_predict(cfg, args.input)
        if args.command == "eval":
            horizons = [int(h) for h in args.horizons.split(",") if h.strip()]
            return cmd_eval(cfg, horizons)
        if args.command == "gradcheck":
            return cmd_gradcheck(cfg, args.J)
        if args.command == "synth":
            return cmd_synth(cfg, args.count, args.length, args.scale, args.amplitude)
        if args.command == "augment":
            return cmd_augment(cfg)
        if args.command == "params":
            return cmd_params(cfg, args.J)
    except (TrainingError, FloatingPointError) as e:
        log.error("%s", e)
        return EXIT_RUNTIME
    except (ValueError, ShapeError, FormatError, SkeletonError, CheckpointError, OSError) as e:
        log.error("%s", e)
        return EXIT_VALIDATION
    parser.error(f"unknown command {args.command}")


if __name__ == "__main__":
    sys.exit(main())
