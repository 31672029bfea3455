"""Cutting records into labelled windows, balancing, splitting, statistics."""

from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Iterable, List, Optional, Sequence, Tuple

import numpy as np

from .annotations import SeizureAnnotation
from .edf import EdfRecord

__all__ = [
    "SEIZURE",
    "NONSEIZURE",
    "SegmentationError",
    "Segment",
    "LabeledDataset",
    "SegmentStatistics",
    "common_channels",
    "seizure_overlap",
    "segment_record",
    "assemble_dataset",
    "segment_statistics",
    "cache_key",
    "save_segment_cache",
    "load_segment_cache",
    "cache_offsets",
    "read_cached_data",
]

SEIZURE = 1
NONSEIZURE = 0


class SegmentationError(ValueError):
    pass


@dataclass
class Segment:
    """One fixed-length multichannel window.

    ``data`` has shape ``(n_sp, n_ch)`` in physical units; it may be
    ``None`` for metadata-only segments, which :meth:`load` fills on demand.
    """

    record_id: str
    start: float
    length: float
    label: int
    seizure_seconds: float
    start_sample: int
    n_samples: int
    data: Optional[np.ndarray] = field(default=None, repr=False)

    @property
    def is_seizure(self) -> bool:
        return self.label == SEIZURE

    @property
    def key(self) -> Tuple[str, int]:
        return (self.record_id, self.start_sample)

    def load(self, loader: Callable[[str], np.ndarray]) -> np.ndarray:
        """Fetch ``data`` from ``loader(record_id) -> (n_total, n_ch)`` if missing."""
        if self.data is None:
            signals = loader(self.record_id)
            self.data = np.array(signals[self.start_sample : self.start_sample + self.n_samples])
        return self.data


def common_channels(records: Iterable[EdfRecord]) -> List[str]:
    """Labels present in every record, in the first record's order.

    Placeholder labels (empty or ``-``) and repeated labels are skipped.
    """
    records = list(records)
    if not records:
        return []
    shared = set(records[0].labels)
    for rec in records[1:]:
        shared &= set(rec.labels)
    out, seen = [], set()
    for label in records[0].labels:
        if label in shared and label not in seen and label.strip("- "):
            out.append(label)
            seen.add(label)
    return out


def seizure_overlap(intervals: Sequence[Tuple[float, float]], start: float, end: float) -> float:
    """Total length of the intersection of ``[start, end)`` with ``intervals``."""
    total = 0.0
    for s, e in intervals:
        lo, hi = max(s, start), min(e, end)
        if hi > lo:
            total += hi - lo
    return total


def _channel_matrix(record: EdfRecord, channels: Sequence[str]) -> Tuple[np.ndarray, float]:
    try:
        idx = [record.channel_index(c) for c in channels]
    except KeyError as exc:
        raise SegmentationError(str(exc.args[0])) from None
    rates = {record.sample_rates[i] for i in idx}
    if len(rates) != 1:
        raise SegmentationError(f"{record.record_id}: selected channels have different sampling rates {sorted(rates)}")
    lengths = {len(record.samples[i]) for i in idx}
    if len(lengths) != 1:
        raise SegmentationError(f"{record.record_id}: selected channels have different lengths")
    return np.stack([record.samples[i] for i in idx], axis=1), rates.pop()


def segment_record(
    record: EdfRecord,
    ann: Optional[SeizureAnnotation],
    seg_len: float,
    channels: Sequence[str],
    keep_data: bool = True,
) -> List[Segment]:
    """Split a record into windows of ``seg_len`` seconds from the start.

    Full windows tile the record without overlap. A leftover tail shorter
    than a window is dropped unless it contains seizure activity, in which
    case one extra window ending at the record end is added (it overlaps its
    predecessor). A window is a seizure window iff its intersection with the
    annotated intervals has positive length.
    """
    if seg_len <= 0:
        raise SegmentationError("segment length must be positive")
    signals, rate = _channel_matrix(record, channels)
    n_total = signals.shape[0]
    n_sp_float = seg_len * rate
    n_sp = int(round(n_sp_float))
    if abs(n_sp - n_sp_float) > 1e-9:
        raise SegmentationError(f"{seg_len} s at {rate} Hz is not a whole number of samples")
    if n_sp > n_total:
        raise SegmentationError(
            f"{record.record_id}: segment length {seg_len} s exceeds record duration {n_total / rate} s"
        )
    intervals = ann.intervals if ann is not None else []
    if ann is not None:
        ann.check_duration(n_total / rate)

    n_full = n_total // n_sp
    starts = [k * n_sp for k in range(n_full)]
    if n_total % n_sp and seizure_overlap(intervals, n_full * n_sp / rate, n_total / rate) > 0:
        starts.append(n_total - n_sp)

    segments = []
    for s in starts:
        t0, t1 = s / rate, (s + n_sp) / rate
        secs = seizure_overlap(intervals, t0, t1)
        segments.append(
            Segment(
                record_id=record.record_id,
                start=t0,
                length=float(seg_len),
                label=SEIZURE if secs > 0 else NONSEIZURE,
                seizure_seconds=secs,
                start_sample=s,
                n_samples=n_sp,
                data=np.array(signals[s : s + n_sp]) if keep_data else None,
            )
        )
    return segments


@dataclass
class LabeledDataset:
    train: List[Segment]
    val: List[Segment]
    test: List[Segment]
    seed: int
    split_ratio: Tuple[float, float, float] = (0.70, 0.15, 0.15)

    def split(self, name: str) -> List[Segment]:
        return {"train": self.train, "val": self.val, "test": self.test}[name]

    def arrays(self, name: str, decimate: int = 1, dtype=np.float64) -> Tuple[np.ndarray, np.ndarray]:
        """``(X, y)`` for one split; ``X`` is ``(n, n_sp // decimate, n_ch)``."""
        segs = self.split(name)
        if any(s.data is None for s in segs):
            raise ValueError("segments have no data loaded")
        if not segs:
            return np.zeros((0, 1, 1), dtype=dtype), np.zeros(0, dtype=np.intp)
        x = np.stack([s.data[::decimate] for s in segs]).astype(dtype, copy=False)
        y = np.array([s.label for s in segs], dtype=np.intp)
        return x, y


def assemble_dataset(
    segments: Sequence[Segment],
    seed: int,
    val_fraction: float = 0.15,
    test_fraction: float = 0.15,
) -> LabeledDataset:
    """Balance classes and split each class into train/val/test.

    All seizure segments are kept (``S`` of them) and ``S`` nonseizure
    segments are drawn without replacement. Per class, ``round(0.15 * S)``
    go to test and to validation (Python rounding: ties to even), the rest
    to training.
    """
    rng = np.random.default_rng(seed)
    seizure = [s for s in segments if s.label == SEIZURE]
    nonseizure = [s for s in segments if s.label == NONSEIZURE]
    n = len(seizure)
    if n == 0:
        raise SegmentationError("no seizure segments to build a dataset from")
    if len(nonseizure) < n:
        raise SegmentationError(f"need {n} nonseizure segments, only {len(nonseizure)} available")
    picked = rng.choice(len(nonseizure), size=n, replace=False)
    nonseizure = [nonseizure[i] for i in sorted(picked)]

    n_test = round(test_fraction * n)
    n_val = round(val_fraction * n)
    if n_test < 1 or n_val < 1 or n_test + n_val >= n:
        raise SegmentationError(f"{n} segments per class is too few for the requested split")
    train, val, test = [], [], []
    for pool in (seizure, nonseizure):
        order = rng.permutation(n)
        test += [pool[i] for i in order[:n_test]]
        val += [pool[i] for i in order[n_test : n_test + n_val]]
        train += [pool[i] for i in order[n_test + n_val :]]
    train = [train[i] for i in rng.permutation(len(train))]
    val = [val[i] for i in rng.permutation(len(val))]
    test = [test[i] for i in rng.permutation(len(test))]
    return LabeledDataset(train, val, test, seed, (1.0 - val_fraction - test_fraction, val_fraction, test_fraction))


@dataclass
class SegmentStatistics:
    """Seizure-window statistics for one segment length.

    Percentages are ``None`` when there are no seizure windows.
    """

    seg_len: float
    n_seizure_segments: int
    mean_seizure_seconds: Optional[float]
    type1_pct: Optional[float]
    type2_pct: Optional[float]
    type3_pct: Optional[float]


def segment_statistics(segments: Iterable[Segment], seg_len: float) -> SegmentStatistics:
    """Type-1: seizure time <= L/4; Type-2: >= L/2; Type-3: >= 3L/4."""
    secs = np.array([s.seizure_seconds for s in segments if s.label == SEIZURE], dtype=np.float64)
    n = int(secs.size)
    if n == 0:
        return SegmentStatistics(seg_len, 0, None, None, None, None)

    def pct(mask):
        return 100.0 * float(mask.sum()) / n

    return SegmentStatistics(
        seg_len=seg_len,
        n_seizure_segments=n,
        mean_seizure_seconds=float(secs.mean()),
        type1_pct=pct(secs <= seg_len / 4),
        type2_pct=pct(secs >= seg_len / 2),
        type3_pct=pct(secs >= 3 * seg_len / 4),
    )


# Segment cache -----------------------------------------------------------------


def cache_key(record_id: str, seg_len: float, channels: Sequence[str]) -> str:
    digest = hashlib.sha256("\x1f".join(channels).encode()).hexdigest()[:12]
    return f"{record_id}_L{seg_len:g}_{digest}"


def save_segment_cache(directory, record_id: str, seg_len: float, channels: Sequence[str], segments: Sequence[Segment]) -> Path:
    """Store segments as ``<key>.json`` plus ``<key>.f32`` (little-endian float32 blocks)."""
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    key = cache_key(record_id, seg_len, channels)
    entries = []
    with open(directory / f"{key}.f32", "wb") as fh:
        for seg in segments:
            if seg.data is None:
                raise ValueError("cannot cache a segment without data")
            fh.write(np.ascontiguousarray(seg.data, dtype="<f4").tobytes())
            entries.append(
                {
                    "start": seg.start,
                    "length": seg.length,
                    "label": seg.label,
                    "seizure_seconds": seg.seizure_seconds,
                    "start_sample": seg.start_sample,
                    "n_samples": seg.n_samples,
                }
            )
    manifest = {
        "format_version": 1,
        "record_id": record_id,
        "seg_len": seg_len,
        "channels": list(channels),
        "segments": entries,
    }
    (directory / f"{key}.json").write_text(json.dumps(manifest, indent=2))
    return directory / f"{key}.json"


def load_segment_cache(
    directory, record_id: str, seg_len: float, channels: Sequence[str], load_data: bool = True
) -> Optional[List[Segment]]:
    """Return cached segments, or ``None`` when no cache entry exists.

    With ``load_data=False`` the segments carry no data; fetch it later with
    :func:`read_cached_data` and :func:`cache_offsets`.
    """
    directory = Path(directory)
    key = cache_key(record_id, seg_len, channels)
    manifest_path = directory / f"{key}.json"
    if not manifest_path.exists():
        return None
    manifest = json.loads(manifest_path.read_text())
    if manifest["channels"] != list(channels):
        return None
    segments = [Segment(record_id=record_id, **e) for e in manifest["segments"]]
    if load_data:
        blob_path = directory / f"{key}.f32"
        for seg, offset in zip(segments, cache_offsets(segments, len(channels))):
            seg.data = read_cached_data(blob_path, offset, seg.n_samples, len(channels))
    return segments


def cache_offsets(segments: Sequence[Segment], n_ch: int) -> List[int]:
    """Byte offset of each segment's block in the cache blob."""
    offsets, pos = [], 0
    for seg in segments:
        offsets.append(pos)
        pos += seg.n_samples * n_ch * 4
    return offsets


def read_cached_data(blob_path, offset: int, n_samples: int, n_ch: int) -> np.ndarray:
    raw = np.fromfile(blob_path, dtype="<f4", count=n_samples * n_ch, offset=offset)
    if raw.size != n_samples * n_ch:
        raise ValueError(f"segment cache {blob_path} is truncated")
    return raw.reshape(n_samples, n_ch).astype(np.float64)
