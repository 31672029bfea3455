"""Command-line entry point: ``adindrnn <verb> [options]``."""

from __future__ import annotations

import argparse
import csv
import json
import logging
import sys
from pathlib import Path
from typing import List, Optional

import numpy as np

from .experiment import (
    DATA_ROOT_ENV,
    Corpus,
    ExperimentConfig,
    load_config,
    run_cv,
    run_round,
    sweep_segment_lengths,
    write_statistics_csv,
)
from .data.segmentation import segment_statistics
from .gradcheck import TOLERANCE, run_gradcheck
from .model import extract_attention_weights, load_checkpoint, save_checkpoint
from .training import write_loss_curve_csv, write_metrics_csv

log = logging.getLogger("adindrnn")


def _common(p: argparse.ArgumentParser, config_required: bool = True) -> None:
    p.add_argument("--config", required=config_required, help="JSON or TOML experiment config")
    p.add_argument("--seed", type=int, help="override the config seed")
    p.add_argument("--out", help="output directory")
    p.add_argument("--seg-len", type=float, help="segment length in seconds")
    p.add_argument("--rounds", type=int, help="number of CV rounds")
    p.add_argument("--decimate", type=int, help="keep every n-th time step")
    p.add_argument("-v", "--verbose", action="store_true")


def _config(args) -> ExperimentConfig:
    cfg = load_config(args.config)
    changes = {}
    for name in ("seed", "out", "seg_len", "rounds", "decimate"):
        value = getattr(args, name, None)
        if value is not None:
            changes[name] = value
    return cfg.replace(**changes) if changes else cfg


def _out(cfg: ExperimentConfig) -> Path:
    out = Path(cfg.out)
    out.mkdir(parents=True, exist_ok=True)
    return out


def cmd_segment(args) -> int:
    cfg = _config(args)
    out = _out(cfg)
    if cfg.data.cache_dir is None:
        cfg.data.cache_dir = str((out / "cache").resolve())
    corpus = Corpus(cfg.data, cfg.channels)
    segs = corpus.segments(cfg.seg_len)
    stats = segment_statistics(segs, cfg.seg_len)
    write_statistics_csv(out / "statistics.csv", [stats])
    n_sz = stats.n_seizure_segments
    print(f"{len(segs)} segments ({n_sz} seizure) from {len(corpus.record_ids)} records, channels: {', '.join(corpus.channels)}")
    print(f"cache: {cfg.data.cache_dir}")
    return 0


def cmd_train(args) -> int:
    cfg = _config(args)
    out = _out(cfg)
    corpus = Corpus(cfg.data, cfg.channels)
    res = run_round(corpus, corpus.segments(cfg.seg_len), cfg, 0)
    write_metrics_csv(out / "metrics.csv", [(0, res.status, res.report)])
    write_loss_curve_csv(out / "loss_curve.csv", {0: res.curve})
    if res.report is None:
        print("training diverged", file=sys.stderr)
        return 1
    save_checkpoint(out / "checkpoint", res.params)
    print(json.dumps(res.report.as_dict(), indent=2))
    return 0


def cmd_cv(args) -> int:
    cfg = _config(args)
    summary = run_cv(cfg)
    print(json.dumps({"mean": summary.mean, "std": summary.std}, indent=2))
    return 0


def cmd_sweep(args) -> int:
    cfg = _config(args)
    if args.lengths:
        cfg = cfg.replace(sweep_lengths=[float(x) for x in args.lengths.split(",")])
    summaries, _ = sweep_segment_lengths(cfg)
    for seg_len, s in summaries.items():
        print(f"L={seg_len:g}: acc {s.mean['accuracy']:.4f} +- {s.std['accuracy']:.4f}")
    return 0


def cmd_attention(args) -> int:
    params = load_checkpoint(args.checkpoint)
    if args.input:
        x = np.load(args.input)
        if x.ndim == 2:
            x = x[None]
        if args.decimate and args.decimate > 1:
            x = x[:, :: args.decimate]
        ids: List[tuple] = [("", i, "") for i in range(len(x))]
        names = [f"ch{c}" for c in range(x.shape[2])]
    else:
        if not args.config:
            print("attention needs --input or --config", file=sys.stderr)
            return 2
        cfg = _config(args)
        corpus = Corpus(cfg.data, cfg.channels)
        segs = corpus.segments(cfg.seg_len)
        if args.records:
            wanted = set(args.records.split(","))
            segs = [s for s in segs if s.record_id in wanted]
        if args.seizure_only:
            segs = [s for s in segs if s.is_seizure]
        if args.limit:
            segs = segs[: args.limit]
        corpus.load(segs)
        x = np.stack([s.data[:: cfg.decimate] for s in segs]) if segs else np.zeros((0, 1, len(corpus.channels)))
        ids = [(s.record_id, s.start, s.label) for s in segs]
        names = corpus.channels
    weights = extract_attention_weights(params, x.astype(params.spec.dtype)) if len(x) else np.zeros((0, len(names)))
    dest = Path(args.dump or "attention.csv")
    if not args.dump and getattr(args, "out", None):
        dest = Path(args.out) / "attention.csv"
    dest.parent.mkdir(parents=True, exist_ok=True)
    with open(dest, "w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["record_id", "start", "label"] + list(names))
        for (rid, start, label), w in zip(ids, weights):
            writer.writerow([rid, start, label] + [repr(float(v)) for v in w])
    print(f"{len(weights)} rows -> {dest}")
    return 0


def cmd_gradcheck(args) -> int:
    base = args.seed or 0
    results = run_gradcheck(range(base, base + args.seeds))
    failed = [r for r in results if not r.passed]
    worst = max(results, key=lambda r: r.error)
    for r in failed:
        print(f"FAIL {r.target} {r.tensor} seed={r.seed} err={r.error:.3e}")
    print(f"{len(results)} checks, {len(failed)} failed, max error {worst.error:.3e} ({worst.target} {worst.tensor}), tolerance {TOLERANCE:g}")
    return 1 if failed else 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="adindrnn",
        description=f"Seizure detection with attention and dense IndRNN blocks. Relative data paths resolve under ${DATA_ROOT_ENV} when set.",
    )
    sub = parser.add_subparsers(dest="verb", required=True)

    p = sub.add_parser("segment", help="segment records, fill the segment cache, write statistics.csv")
    _common(p)
    p.set_defaults(func=cmd_segment)

    p = sub.add_parser("train", help="one split, one training run, checkpoint + metrics")
    _common(p)
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("cv", help="repeated random sub-sampling cross-validation")
    _common(p)
    p.set_defaults(func=cmd_cv)

    p = sub.add_parser("sweep", help="statistics and CV for several segment lengths")
    _common(p)
    p.add_argument("--lengths", help="comma-separated lengths in seconds (default from config)")
    p.set_defaults(func=cmd_sweep)

    p = sub.add_parser("attention", help="dump per-sample channel attention weights as CSV")
    _common(p, config_required=False)
    p.add_argument("--checkpoint", required=True, help="checkpoint directory")
    p.add_argument("--input", help=".npy array (n, steps, channels) instead of config segments")
    p.add_argument("--records", help="comma-separated record ids to restrict to")
    p.add_argument("--seizure-only", action="store_true")
    p.add_argument("--limit", type=int)
    p.add_argument("--dump", help="output CSV path (default <out>/attention.csv)")
    p.set_defaults(func=cmd_attention)

    p = sub.add_parser("gradcheck", help="finite-difference check of every backward pass")
    p.add_argument("--seed", type=int, default=0, help="first seed")
    p.add_argument("--seeds", type=int, default=5, help="number of seeds")
    p.add_argument("-v", "--verbose", action="store_true")
    p.set_defaults(func=cmd_gradcheck)
    return parser


def main(argv: Optional[List[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    try:
        return args.func(args)
    except (FileNotFoundError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
