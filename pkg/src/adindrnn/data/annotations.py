"""Seizure annotations.

Two input formats are read:

* ``csv``: a header row ``record_id,start_s,end_s`` then one interval per row.
* ``chb_summary``: the per-case ``chbNN-summary.txt`` files shipped with
  CHB-MIT, where ``File Name:`` lines open a record and
  ``Seizure [n] Start Time:`` / ``Seizure [n] End Time:`` lines follow.
"""

from __future__ import annotations

import csv
import io
import re
from dataclasses import dataclass, field
from pathlib import Path, PurePath
from typing import Dict, List, Tuple

__all__ = ["AnnotationError", "SeizureAnnotation", "parse_annotations", "read_annotations", "write_annotations_csv"]

CSV_HEADER = ("record_id", "start_s", "end_s")


class AnnotationError(ValueError):
    pass


@dataclass
class SeizureAnnotation:
    record_id: str
    intervals: List[Tuple[float, float]] = field(default_factory=list)

    def __post_init__(self):
        self.intervals = sorted((float(s), float(e)) for s, e in self.intervals)
        for start, end in self.intervals:
            if start < 0 or end <= start:
                raise AnnotationError(f"{self.record_id}: invalid interval ({start}, {end})")
        for (s0, e0), (s1, e1) in zip(self.intervals, self.intervals[1:]):
            if s1 < e0:
                raise AnnotationError(f"{self.record_id}: overlapping intervals ({s0}, {e0}) and ({s1}, {e1})")

    def check_duration(self, duration: float) -> None:
        if self.intervals and self.intervals[-1][1] > duration:
            raise AnnotationError(f"{self.record_id}: interval ends after the record ({duration} s)")


def _record_key(name: str) -> str:
    return PurePath(name.strip()).stem


def _parse_csv(text: str) -> List[SeizureAnnotation]:
    reader = csv.reader(io.StringIO(text))
    rows = [r for r in reader if r and any(cell.strip() for cell in r)]
    if not rows or tuple(c.strip() for c in rows[0]) != CSV_HEADER:
        raise AnnotationError(f"annotation CSV must start with the header {','.join(CSV_HEADER)}")
    grouped: Dict[str, List[Tuple[float, float]]] = {}
    for line_no, row in enumerate(rows[1:], start=2):
        if len(row) != 3:
            raise AnnotationError(f"line {line_no}: expected 3 columns, got {len(row)}")
        rec, start, end = (c.strip() for c in row)
        try:
            interval = (float(start), float(end))
        except ValueError:
            raise AnnotationError(f"line {line_no}: non-numeric interval bounds {start!r}, {end!r}") from None
        grouped.setdefault(rec, []).append(interval)
    return [SeizureAnnotation(rec, intervals) for rec, intervals in grouped.items()]


_FILE_RE = re.compile(r"^\s*File Name:\s*(\S+)")
_START_RE = re.compile(r"^\s*Seizure(?:\s+\d+)?\s+Start Time:\s*([0-9.]+)\s*(?:seconds)?", re.IGNORECASE)
_END_RE = re.compile(r"^\s*Seizure(?:\s+\d+)?\s+End Time:\s*([0-9.]+)\s*(?:seconds)?", re.IGNORECASE)


def _parse_chb_summary(text: str) -> List[SeizureAnnotation]:
    annotations: Dict[str, List[Tuple[float, float]]] = {}
    current = None
    pending_start = None
    for line_no, line in enumerate(text.splitlines(), start=1):
        m = _FILE_RE.match(line)
        if m:
            if pending_start is not None:
                raise AnnotationError(f"line {line_no}: seizure start without end in {current}")
            current = _record_key(m.group(1))
            annotations.setdefault(current, [])
            continue
        m = _START_RE.match(line)
        if m:
            if current is None:
                raise AnnotationError(f"line {line_no}: seizure time before any File Name line")
            pending_start = float(m.group(1))
            continue
        m = _END_RE.match(line)
        if m:
            if pending_start is None:
                raise AnnotationError(f"line {line_no}: seizure end without start")
            annotations[current].append((pending_start, float(m.group(1))))
            pending_start = None
    if pending_start is not None:
        raise AnnotationError(f"seizure start without end in {current}")
    return [SeizureAnnotation(rec, intervals) for rec, intervals in annotations.items()]


def parse_annotations(text: str, format: str = "csv") -> List[SeizureAnnotation]:
    if format == "csv":
        return _parse_csv(text)
    if format == "chb_summary":
        return _parse_chb_summary(text)
    raise ValueError(f"unknown annotation format {format!r}")


def read_annotations(path, format: str = "auto") -> List[SeizureAnnotation]:
    path = Path(path)
    if format == "auto":
        format = "csv" if path.suffix.lower() == ".csv" else "chb_summary"
    return parse_annotations(path.read_text(), format)


def write_annotations_csv(path, annotations: List[SeizureAnnotation]) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(CSV_HEADER)
        for ann in annotations:
            for start, end in ann.intervals:
                writer.writerow([ann.record_id, repr(start), repr(end)])
