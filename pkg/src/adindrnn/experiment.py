"""Configuration-driven cross-validation and segment-length sweeps."""

from __future__ import annotations

import csv
import dataclasses
import glob
import json
import logging
import os
import sys
from dataclasses import dataclass, field
from pathlib import Path
from typing import Dict, Iterable, List, Optional, Sequence

import numpy as np

from .data.annotations import AnnotationError, SeizureAnnotation, read_annotations
from .data.edf import EdfRecord, read_edf
from .data.segmentation import (
    LabeledDataset,
    Segment,
    SegmentStatistics,
    assemble_dataset,
    cache_key,
    cache_offsets,
    common_channels,
    load_segment_cache,
    read_cached_data,
    save_segment_cache,
    segment_record,
    segment_statistics,
)
from .data.synthetic import make_synthetic_records
from .model import ModelParams, ModelSpec, save_checkpoint
from .training import (
    METRIC_NAMES,
    CvSummary,
    MetricsReport,
    TrainConfig,
    TrainingDivergedError,
    aggregate_cv,
    compute_metrics,
    predict_logits,
    train,
    write_loss_curve_csv,
    write_metrics_csv,
    write_summary_json,
)

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib

__all__ = [
    "DATA_ROOT_ENV",
    "DEFAULT_SWEEP_LENGTHS",
    "DataConfig",
    "ExperimentConfig",
    "Corpus",
    "RoundResult",
    "load_config",
    "round_seed",
    "build_spec",
    "run_round",
    "run_cv",
    "sweep_segment_lengths",
]

log = logging.getLogger(__name__)

DATA_ROOT_ENV = "ADINDRNN_DATA_ROOT"
DEFAULT_SWEEP_LENGTHS = (23, 30, 35, 40, 45, 50, 55, 60, 70, 80, 90, 100, 110)
STATISTICS_HEADER = ("seg_len", "n_seizure_segments", "mean_seizure_seconds", "type1_pct", "type2_pct", "type3_pct")
SWEEP_HEADER = ("seg_len", "status") + tuple(f"{m}_{s}" for m in METRIC_NAMES for s in ("mean", "std"))


@dataclass
class DataConfig:
    """Where segments come from.

    Either ``edf_dir`` (searched with ``edf_glob``) plus ``annotations``
    (a CSV file, a CHB-MIT summary file, or a glob of summary files), or a
    ``synthetic`` table of keyword arguments for
    :func:`~adindrnn.data.synthetic.make_synthetic_records`.
    """

    edf_dir: Optional[str] = None
    edf_glob: str = "**/*.edf"
    annotations: Optional[str] = None
    annotation_format: str = "auto"
    exclude: List[str] = field(default_factory=list)
    synthetic: Optional[dict] = None
    cache_dir: Optional[str] = None

    def __post_init__(self):
        if (self.edf_dir is None) == (self.synthetic is None):
            raise ValueError("data config needs exactly one of 'edf_dir' or 'synthetic'")


@dataclass
class ExperimentConfig:
    data: DataConfig
    channels: Optional[List[str]] = None
    seg_len: float = 23.0
    model: str = "ADIndRNN-(3,3)"
    state_sizes: Optional[List[int]] = None
    model_options: Dict[str, object] = field(default_factory=dict)
    train: TrainConfig = field(default_factory=TrainConfig)
    rounds: int = 10
    seed: int = 0
    out: str = "results"
    decimate: int = 1
    sweep_lengths: List[float] = field(default_factory=lambda: list(DEFAULT_SWEEP_LENGTHS))
    sweep_model: str = "IndRNN-12"
    # per-length {"learning_rate": ..., "epochs": ...} overrides, keyed by str(seg_len)
    length_overrides: Dict[str, Dict[str, float]] = field(default_factory=dict)
    save_checkpoints: bool = False

    def __post_init__(self):
        if isinstance(self.data, dict):
            self.data = DataConfig(**self.data)
        if isinstance(self.train, dict):
            self.train = TrainConfig(**self.train)
        if self.rounds < 1:
            raise ValueError("rounds must be >= 1")
        if self.seg_len <= 0:
            raise ValueError("seg_len must be positive")
        if self.decimate < 1:
            raise ValueError("decimate must be >= 1")

    @classmethod
    def from_dict(cls, d: dict) -> "ExperimentConfig":
        known = {f.name for f in dataclasses.fields(cls)}
        unknown = set(d) - known
        if unknown:
            raise ValueError(f"unknown config keys: {sorted(unknown)}")
        return cls(**d)

    def to_dict(self) -> dict:
        return dataclasses.asdict(self)

    def replace(self, **changes) -> "ExperimentConfig":
        return dataclasses.replace(self, **changes)


def load_config(path) -> ExperimentConfig:
    path = Path(path)
    text = path.read_text()
    if path.suffix.lower() == ".toml":
        raw = tomllib.loads(text)
    else:
        raw = json.loads(text)
    return ExperimentConfig.from_dict(raw)


def round_seed(seed: int, round_idx: int) -> int:
    """Independent per-round seed derived from the experiment seed."""
    return int(np.random.SeedSequence([seed, round_idx]).generate_state(1)[0])


def _resolve(path: str) -> Path:
    p = Path(path)
    root = os.environ.get(DATA_ROOT_ENV)
    if root and not p.is_absolute():
        return Path(root) / p
    return p


class Corpus:
    """Records and their annotations, loaded lazily for EDF input."""

    def __init__(self, cfg: DataConfig, channels: Optional[Sequence[str]] = None):
        self.cfg = cfg
        self._records: Dict[str, EdfRecord] = {}
        self._paths: Dict[str, Path] = {}
        self._signal_cache: Dict[str, np.ndarray] = {}
        self._cached: Dict[tuple, tuple] = {}
        excluded = {e.lower() for e in cfg.exclude}
        if cfg.synthetic is not None:
            pairs = make_synthetic_records(**cfg.synthetic)
            self._records = {r.record_id: r for r, _ in pairs}
            self.annotations = {a.record_id: a for _, a in pairs}
        else:
            root = _resolve(cfg.edf_dir)
            for path in sorted(root.glob(cfg.edf_glob)):
                if path.stem.lower() in excluded:
                    continue
                self._paths[path.stem] = path
            if not self._paths:
                raise FileNotFoundError(f"no EDF files matching {cfg.edf_glob!r} under {root}")
            self.annotations = self._read_annotations(excluded)
        self.record_ids = sorted(self._records) if cfg.synthetic is not None else sorted(self._paths)
        unknown = set(self.annotations) - set(self.record_ids)
        if unknown:
            raise AnnotationError(f"annotations refer to unknown records: {sorted(unknown)[:5]}")
        self.channels = list(channels) if channels else common_channels(self._record(r, header_only=True) for r in self.record_ids)
        if not self.channels:
            raise ValueError("no channel is common to all records")
        self._segments: Dict[float, List[Segment]] = {}

    @classmethod
    def from_records(cls, pairs, channels: Optional[Sequence[str]] = None) -> "Corpus":
        """In-memory corpus from ``(EdfRecord, SeizureAnnotation)`` pairs."""
        pairs = list(pairs)
        corpus = cls.__new__(cls)
        corpus.cfg = DataConfig(synthetic={})
        corpus._records = {r.record_id: r for r, _ in pairs}
        corpus._paths = {}
        corpus._signal_cache = {}
        corpus._cached = {}
        corpus.annotations = {a.record_id: a for _, a in pairs if a is not None}
        corpus.record_ids = sorted(corpus._records)
        corpus.channels = list(channels) if channels else common_channels(corpus._records.values())
        corpus._segments = {}
        return corpus

    def _read_annotations(self, excluded) -> Dict[str, SeizureAnnotation]:
        if self.cfg.annotations is None:
            return {}
        pattern = str(_resolve(self.cfg.annotations))
        paths = sorted(Path(p) for p in glob.glob(pattern, recursive=True))
        if not paths:
            raise FileNotFoundError(f"no annotation file matches {pattern}")
        out: Dict[str, SeizureAnnotation] = {}
        for p in paths:
            for ann in read_annotations(p, self.cfg.annotation_format):
                if ann.record_id.lower() in excluded:
                    continue
                if ann.record_id in out:
                    raise AnnotationError(f"record {ann.record_id} annotated twice")
                out[ann.record_id] = ann
        return out

    def _record(self, record_id: str, header_only: bool = False) -> EdfRecord:
        if record_id in self._records:
            return self._records[record_id]
        return read_edf(self._paths[record_id], header_only=header_only)

    def duration(self, record_id: str) -> float:
        return self._record(record_id, header_only=True).duration

    def min_duration(self) -> float:
        return min(self.duration(r) for r in self.record_ids)

    def segments(self, seg_len: float) -> List[Segment]:
        """Metadata of every window at ``seg_len`` (data is loaded on demand).

        With a cache directory, segment data always comes from the float32
        cache, so cold and warm caches give identical inputs.
        """
        if seg_len in self._segments:
            return self._segments[seg_len]
        cache_dir = _resolve(self.cfg.cache_dir) if self.cfg.cache_dir else None
        out: List[Segment] = []
        for rid in self.record_ids:
            if cache_dir is not None:
                segs = load_segment_cache(cache_dir, rid, seg_len, self.channels, load_data=False)
                if segs is None:
                    segs = segment_record(self._record(rid), self.annotations.get(rid), seg_len, self.channels)
                    save_segment_cache(cache_dir, rid, seg_len, self.channels, segs)
                    for s in segs:
                        s.data = None
                blob = cache_dir / f"{cache_key(rid, seg_len, self.channels)}.f32"
                for s, offset in zip(segs, cache_offsets(segs, len(self.channels))):
                    self._cached[s.key + (seg_len,)] = (blob, offset)
            else:
                keep = rid in self._records
                segs = segment_record(self._record(rid), self.annotations.get(rid), seg_len, self.channels, keep_data=keep)
            out += segs
        self._segments[seg_len] = out
        return out

    def _signals(self, record_id: str) -> np.ndarray:
        if record_id not in self._signal_cache:
            record = self._record(record_id)
            idx = [record.channel_index(c) for c in self.channels]
            self._signal_cache = {record_id: np.stack([record.samples[i] for i in idx], axis=1)}
        return self._signal_cache[record_id]

    def load(self, segments: Iterable[Segment]) -> None:
        """Fill ``data`` for the given segments, reading each record once."""
        n_ch = len(self.channels)
        for seg in sorted((s for s in segments if s.data is None), key=lambda s: s.key):
            cached = self._cached.get(seg.key + (seg.length,))
            if cached is not None:
                seg.data = read_cached_data(cached[0], cached[1], seg.n_samples, n_ch)
            else:
                seg.load(self._signals)

    def release(self, segments: Iterable[Segment]) -> None:
        """Drop loaded data of file-backed segments to bound memory."""
        for seg in segments:
            if seg.record_id not in self._records or self.cfg.cache_dir:
                seg.data = None
        self._signal_cache = {}


def build_spec(name: str, n_channels: int, n_steps: int, cfg: ExperimentConfig) -> ModelSpec:
    options = dict(cfg.model_options)
    return ModelSpec.from_name(name, n_channels=n_channels, state_sizes=cfg.state_sizes, n_steps=n_steps, **options)


@dataclass
class RoundResult:
    round_idx: int
    status: str
    report: Optional[MetricsReport]
    curve: List[dict]
    params: Optional[ModelParams] = None
    dataset: Optional[LabeledDataset] = None


def run_round(
    corpus: Corpus,
    segments: List[Segment],
    cfg: ExperimentConfig,
    round_idx: int,
    model_name: Optional[str] = None,
    train_cfg: Optional[TrainConfig] = None,
) -> RoundResult:
    """Resample, split, train and test once."""
    seed = round_seed(cfg.seed, round_idx)
    ds = assemble_dataset(segments, seed)
    corpus.load(ds.train + ds.val + ds.test)
    dtype = cfg.model_options.get("dtype", "float64")
    x_tr, y_tr = ds.arrays("train", cfg.decimate, dtype)
    x_va, y_va = ds.arrays("val", cfg.decimate, dtype)
    x_te, y_te = ds.arrays("test", cfg.decimate, dtype)
    spec = build_spec(model_name or cfg.model, x_tr.shape[2], x_tr.shape[1], cfg)
    tcfg = dataclasses.replace(train_cfg or cfg.train, seed=seed)
    try:
        params, curve = train(spec, x_tr, y_tr, x_va, y_va, tcfg)
    except TrainingDivergedError as exc:
        log.warning("round %d diverged: %s", round_idx, exc)
        return RoundResult(round_idx, "failed", None, [], dataset=ds)
    pred = predict_logits(params, x_te, tcfg.eval_batch_size).argmax(axis=1)
    return RoundResult(round_idx, "ok", compute_metrics(pred, y_te), curve, params, ds)


def run_cv(
    cfg: ExperimentConfig,
    corpus: Optional[Corpus] = None,
    seg_len: Optional[float] = None,
    out_dir=None,
    model_name: Optional[str] = None,
    train_cfg: Optional[TrainConfig] = None,
) -> CvSummary:
    """Repeated random sub-sampling CV.

    Writes ``rounds.csv``, ``loss_curves.csv`` and ``summary.json`` into
    ``out_dir`` (default ``cfg.out``). Rounds that diverge are recorded as
    failed and left out of the summary.
    """
    corpus = corpus or Corpus(cfg.data, cfg.channels)
    seg_len = cfg.seg_len if seg_len is None else seg_len
    out_dir = Path(out_dir or cfg.out)
    out_dir.mkdir(parents=True, exist_ok=True)
    segments = corpus.segments(seg_len)

    results = []
    for r in range(cfg.rounds):
        res = run_round(corpus, segments, cfg, r, model_name, train_cfg)
        log.info("round %d: %s", r, res.status if res.report is None else f"acc={res.report.accuracy:.4f}")
        if cfg.save_checkpoints and res.params is not None:
            save_checkpoint(out_dir / f"checkpoint_round{r:02d}", res.params)
        res.params = None
        if res.dataset is not None:
            corpus.release(res.dataset.train + res.dataset.val + res.dataset.test)
        results.append(res)

    ok = [res.report for res in results if res.report is not None]
    if not ok:
        raise TrainingDivergedError("every round diverged")
    summary = aggregate_cv(ok)
    write_metrics_csv(out_dir / "rounds.csv", [(res.round_idx, res.status, res.report) for res in results])
    write_loss_curve_csv(out_dir / "loss_curves.csv", {res.round_idx: res.curve for res in results})
    write_summary_json(
        out_dir / "summary.json",
        summary,
        {
            "seg_len": seg_len,
            "model": model_name or cfg.model,
            "failed_rounds": [res.round_idx for res in results if res.report is None],
        },
    )
    return summary


def _fmt(value) -> str:
    if value is None:
        return "undefined"
    return repr(float(value)) if isinstance(value, float) else str(value)


def _statistics_row(stats: SegmentStatistics) -> List[str]:
    return [_length_key(stats.seg_len)] + [_fmt(getattr(stats, k)) for k in STATISTICS_HEADER[1:]]


def write_statistics_csv(path, rows: Sequence[SegmentStatistics]) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(STATISTICS_HEADER)
        for stats in rows:
            writer.writerow(_statistics_row(stats))


def sweep_segment_lengths(cfg: ExperimentConfig, lengths: Optional[Sequence[float]] = None, corpus: Optional[Corpus] = None):
    """Segment statistics and a full CV run for each segment length.

    Writes ``statistics.csv`` and ``results.csv`` in ``cfg.out`` plus one
    ``L<len>/`` subdirectory of CV artifacts per length. Lengths longer than
    the shortest record are reported with status ``skipped``.
    """
    corpus = corpus or Corpus(cfg.data, cfg.channels)
    lengths = list(cfg.sweep_lengths if lengths is None else lengths)
    out_dir = Path(cfg.out)
    out_dir.mkdir(parents=True, exist_ok=True)
    shortest = corpus.min_duration()

    stats_rows, result_rows, summaries = [], [], {}
    for seg_len in lengths:
        if seg_len > shortest:
            log.warning("segment length %s s exceeds the shortest record (%s s); skipped", seg_len, shortest)
            result_rows.append([_length_key(seg_len), "skipped"] + ["undefined"] * (len(SWEEP_HEADER) - 2))
            continue
        stats = segment_statistics(corpus.segments(seg_len), seg_len)
        stats_rows.append(stats)
        overrides = cfg.length_overrides.get(_length_key(seg_len), {})
        tcfg = dataclasses.replace(cfg.train, **overrides)
        summary = run_cv(cfg, corpus, seg_len, out_dir / f"L{_length_key(seg_len)}", cfg.sweep_model, tcfg)
        summaries[seg_len] = summary
        row = [_length_key(seg_len), "ok"]
        for m in METRIC_NAMES:
            row += [_fmt(summary.mean[m]), _fmt(summary.std[m])]
        result_rows.append(row)

    write_statistics_csv(out_dir / "statistics.csv", stats_rows)
    with open(out_dir / "results.csv", "w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(SWEEP_HEADER)
        writer.writerows(result_rows)
    return summaries, stats_rows


def _length_key(seg_len: float) -> str:
    return f"{seg_len:g}"
