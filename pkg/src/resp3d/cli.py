"""``resp3d`` command line.

Exit codes: 0 ok, 1 threshold failure, 2 usage/config/dataset error, 3 numeric abort.
"""

from __future__ import annotations

import argparse
import csv
import sys
from dataclasses import replace
from pathlib import Path

from . import analysis
from . import frames as fp
from . import trainer as tr
from .config import RunConfig
from .network import CheckpointError, build_model, format_walkthrough, load_checkpoint, shape_walkthrough
from .tensor import precision, save_tensor
from .textconfig import ConfigError

EXIT_OK, EXIT_THRESHOLD, EXIT_USAGE, EXIT_NUMERIC = 0, 1, 2, 3


class CliError(Exception):
    def __init__(self, code: int, message: str):
        super().__init__(message)
        self.code = code


def _load_config(path) -> RunConfig:
    if path is None:
        return RunConfig()
    return RunConfig.load(path)


def _say(*lines) -> None:
    for line in lines:
        print(line, flush=True)


# ---------------------------------------------------------------- extract-residuals

def cmd_extract_residuals(args) -> int:
    if args.step < 1:
        raise CliError(EXIT_USAGE, f"step size must be >= 1 (got {args.step})")
    if args.step >= args.clip_len:
        raise CliError(EXIT_USAGE, f"step size must be < clip length (s={args.step}, T={args.clip_len})")
    index = fp.open_dataset(args.input)
    out = Path(args.output)
    out.mkdir(parents=True, exist_ok=True)
    rows = []
    for e in index.entries:
        seq = fp.load_frames(Path(index.root) / e.path, e.fps)
        if args.short_side:
            seq = fp.resample_and_resize(seq, args.fps, args.short_side)
        for k, start in enumerate(fp.sample_test_clips(len(seq), args.clip_len, args.clips)):
            clip = fp.build_residual_clip(seq, start, args.clip_len, args.step, args.pad)
            rel = Path(e.path) / f"clip_{k:02d}.p3dt"
            (out / rel).parent.mkdir(parents=True, exist_ok=True)
            save_tensor(out / rel, clip.to_network())
            rows.append((str(rel), e.label, clip.modality, args.step, start, clip.length))
    with open(out / "manifest.tsv", "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, delimiter="\t", lineterminator="\n")
        w.writerow(("clip", "label", "modality", "step", "start", "frames"))
        w.writerows(rows)
    _say(f"wrote {len(rows)} residual clips from {len(index)} videos to {out}")
    return EXIT_OK


# ---------------------------------------------------------------- train / eval

def _datasets(cfg: RunConfig):
    if not cfg.data.train_root:
        raise CliError(EXIT_USAGE, "config must set train_root")
    train_index = fp.open_dataset(cfg.data.train_root)
    train_set = tr.VideoDataset(train_index, cfg.network, cfg.data)
    missing = [m for m in cfg.network.modalities if cfg.data.standardizer(m) is None]
    if missing:
        data = tr.with_standardizers(cfg.data, tr.fit_standardizers(train_set))
        cfg = replace(cfg, data=data)
        train_set = tr.VideoDataset(train_index, cfg.network, cfg.data)
    val_set = None
    if cfg.data.val_root:
        val_set = tr.VideoDataset(fp.open_dataset(cfg.data.val_root), cfg.network, cfg.data)
    return cfg, train_set, val_set


def cmd_train(args) -> int:
    given = _load_config(args.config)
    run_dir = Path(args.output) if args.output else given.run_dir()
    cfg, train_set, val_set = _datasets(given)
    run_dir.mkdir(parents=True, exist_ok=True)
    (run_dir / "config.txt").write_text(cfg.to_text(), encoding="utf-8")
    _say(f"run directory: {run_dir}")
    with precision(cfg.train.precision):
        model = build_model(cfg.network, cfg.train.seed)
        report = lambda r: _say(r.log_line())  # noqa: E731
        try:
            if args.resume:
                result = tr.resume(model, args.resume, train_set, cfg.train, val_set, run_dir, report)
            else:
                result = tr.train(model, train_set, cfg.train, val_set, run_dir, on_epoch=report)
        except tr.NumericalError as exc:
            raise CliError(EXIT_NUMERIC, f"numeric abort: {exc}") from exc
    final = result.final
    if final is not None:
        _say(f"done after epoch {final.epoch}: loss {final.loss:.4f} top1 {final.top1:.4f}"
             + (" (early stop)" if result.stopped_early else ""))
    return EXIT_OK


def cmd_eval(args) -> int:
    cfg = _load_config(args.config)
    cfg, train_set, val_set = _datasets(cfg)
    dataset = train_set if args.split == "train" else val_set
    if dataset is None:
        raise CliError(EXIT_USAGE, "config sets no val_root; use --split train")
    with precision(cfg.train.precision):
        model = build_model(cfg.network, cfg.train.seed)
        load_checkpoint(args.ckpt, model)
        res = tr.evaluate(model, dataset, args.clips or cfg.train.test_clips, fp.env_workers(cfg.train.num_workers))
    _say(f"top1 {res.top1:.4f}", f"top5 {res.top5:.4f}")
    if args.min_top1 is not None and res.top1 < args.min_top1:
        _say(f"top1 {res.top1:.4f} below required {args.min_top1:.4f}")
        return EXIT_THRESHOLD
    return EXIT_OK


# ---------------------------------------------------------------- analysis commands

def cmd_flops(args) -> int:
    cfg = _load_config(args.config).network
    report = analysis.profile(cfg, detail=args.detail)
    _say(report.to_tsv().rstrip("\n") if args.tsv else report.to_text())
    other = replace(cfg, conv_backend="full3d" if cfg.conv_backend == "pseudo3d" else "pseudo3d")
    p3d, f3d = (report, analysis.profile(other)) if cfg.conv_backend == "pseudo3d" else (analysis.profile(other), report)
    _say(f"full3d/pseudo3d madd ratio: {f3d.total_madds / p3d.total_madds:.2f} "
         f"(pseudo3d {p3d.gflops('madd'):.2f} G, full3d {f3d.gflops('madd'):.2f} G madds)")
    if args.study:
        _say("", analysis.flop_study(cfg).to_text())
    return EXIT_OK


def cmd_gradcheck(args) -> int:
    kw = dict(threshold=args.threshold)
    if args.target == "ops":
        reports = analysis.grad_check_ops(args.seed)
    elif args.target == "block":
        reports = {}
        for att in (True, False):
            for fres in (True, False):
                for backend in ("pseudo3d", "full3d"):
                    block, x = analysis.tiny_block(args.seed, att, fres, backend)
                    reports[f"block att={att} fres={fres} {backend}"] = analysis.grad_check_module(
                        block, [x], args.seed, **kw)
    else:
        reports = {"model": analysis.grad_check_model(args.seed, **kw)}
    worst = 0.0
    for name, rep in reports.items():
        err = rep.max_rel_err
        worst = max(worst, err)
        _say(f"{name:<40} {err:.3e}  {'ok' if err <= args.threshold else 'FAIL'}")
    ok = worst <= args.threshold
    _say(f"max relative error {worst:.3e} (threshold {args.threshold:g}): {'PASS' if ok else 'FAIL'}")
    return EXIT_OK if ok else EXIT_THRESHOLD


def cmd_inspect_shapes(args) -> int:
    cfg = _load_config(args.config).network
    _say(format_walkthrough(shape_walkthrough(cfg)))
    return EXIT_OK


def cmd_make_toy(args) -> int:
    root = Path(args.output)
    spec = tr.ToyDatasetSpec(num_classes=args.classes, speed=args.speed)
    tr.generate_toy_splits(root, args.seed, args.train, args.val, spec)
    net = tr.toy_network("residual", num_classes=args.classes)
    cfg = RunConfig(net, tr.TrainConfig(epochs=60, early_stop_top1=0.9, seed=args.seed),
                    tr.toy_data_config("train", "val"), "runs")
    (root / "toy.cfg").write_text(cfg.to_text(), encoding="utf-8")
    _say(f"toy dataset ({args.train} train / {args.val} val videos) and config written to {root}")
    return EXIT_OK


# ---------------------------------------------------------------- entry point

def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="resp3d", description="Residual-frame pseudo-3D video networks.")
    sub = p.add_subparsers(dest="command", required=True)

    s = sub.add_parser("extract-residuals", help="write residual clips as P3DT tensors plus a manifest")
    s.add_argument("--input", required=True, help="dataset root or index file")
    s.add_argument("--output", required=True)
    s.add_argument("--step", type=int, required=True)
    s.add_argument("--clip-len", type=int, required=True)
    s.add_argument("--pad", choices=fp.PAD_POLICIES, default="repeat")
    s.add_argument("--clips", type=int, default=10, help="uniformly spaced clips per video")
    s.add_argument("--short-side", type=int, default=0, help="resize short side first (0 keeps frames as-is)")
    s.add_argument("--fps", type=float, default=15.0)
    s.set_defaults(func=cmd_extract_residuals)

    s = sub.add_parser("train", help="train a model from a run config")
    s.add_argument("--config", required=True)
    s.add_argument("--resume", help="epoch checkpoint to continue from")
    s.add_argument("--output", help="run directory (default: <output_dir>/<hash>-seed<seed>)")
    s.set_defaults(func=cmd_train)

    s = sub.add_parser("eval", help="10-clip video-level top-1/top-5")
    s.add_argument("--config", required=True)
    s.add_argument("--ckpt", required=True)
    s.add_argument("--split", choices=("val", "train"), default="val")
    s.add_argument("--clips", type=int, default=0, help="clips per video (default: test_clips)")
    s.add_argument("--min-top1", type=float, help="exit 1 when top-1 falls below this")
    s.set_defaults(func=cmd_eval)

    s = sub.add_parser("flops", help="analytic madds/params report")
    s.add_argument("--config", help="run config (default: canonical network)")
    s.add_argument("--detail", action="store_true", help="one row per conv/norm/activation")
    s.add_argument("--tsv", action="store_true", help="machine-readable name/madds/params/shape lines")
    s.add_argument("--study", action="store_true", help="add the convention x restore-width table")
    s.set_defaults(func=cmd_flops)

    s = sub.add_parser("gradcheck", help="finite-difference gradient check")
    s.add_argument("--target", choices=("ops", "block", "model"), default="ops")
    s.add_argument("--threshold", type=float, default=1e-4)
    s.add_argument("--seed", type=int, default=0)
    s.set_defaults(func=cmd_gradcheck)

    s = sub.add_parser("inspect-shapes", help="print the per-stage shape walkthrough")
    s.add_argument("--config", help="run config (default: canonical network)")
    s.set_defaults(func=cmd_inspect_shapes)

    s = sub.add_parser("make-toy", help="generate the synthetic motion dataset and a matching config")
    s.add_argument("--output", required=True)
    s.add_argument("--seed", type=int, default=0)
    s.add_argument("--train", type=int, default=200)
    s.add_argument("--val", type=int, default=80)
    s.add_argument("--classes", type=int, default=4)
    s.add_argument("--speed", type=int, default=2)
    s.set_defaults(func=cmd_make_toy)
    return p


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_USAGE if exc.code else EXIT_OK
    try:
        return args.func(args)
    except CliError as exc:
        print(f"resp3d: {exc}", file=sys.stderr)
        return exc.code
    except (ConfigError, fp.DatasetError, CheckpointError) as exc:
        print(f"resp3d: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except ValueError as exc:
        print(f"resp3d: {exc}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
