"""Reader and writer for European Data Format (EDF) files.

Layout: a 256-byte ASCII header, 256 bytes of ASCII header per signal
(stored field-major: all labels, then all transducers, ...), then data
records. Each record holds, per signal, ``samples_per_record`` 16-bit
little-endian two's-complement integers.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path
from typing import List, Sequence, Union

import numpy as np

__all__ = ["EdfParseError", "EdfRecord", "parse_edf", "read_edf", "write_edf", "digital_to_physical"]

# (name, width) of the fixed header, in file order
_FIXED_FIELDS = (
    ("version", 8),
    ("patient", 80),
    ("recording", 80),
    ("start_date", 8),
    ("start_time", 8),
    ("header_bytes", 8),
    ("reserved", 44),
    ("n_records", 8),
    ("record_duration", 8),
    ("n_signals", 4),
)

_SIGNAL_FIELDS = (
    ("label", 16),
    ("transducer", 80),
    ("physical_dimension", 8),
    ("physical_min", 8),
    ("physical_max", 8),
    ("digital_min", 8),
    ("digital_max", 8),
    ("prefiltering", 80),
    ("samples_per_record", 8),
    ("reserved", 32),
)


class EdfParseError(ValueError):
    def __init__(self, message: str, offset: int):
        super().__init__(f"{message} (byte offset {offset})")
        self.offset = offset


@dataclass
class EdfRecord:
    """Decoded EDF file.

    ``digital`` keeps the raw integers; ``samples`` holds the calibrated
    physical values (calibration applied once, at parse time).
    """

    labels: List[str]
    sample_rates: List[float]
    physical_min: List[float]
    physical_max: List[float]
    digital_min: List[int]
    digital_max: List[int]
    samples: List[np.ndarray]
    digital: List[np.ndarray]
    n_records: int
    record_duration: float
    samples_per_record: List[int]
    record_id: str = ""
    version: str = "0"
    patient: str = ""
    recording: str = ""
    start_date: str = ""
    start_time: str = ""
    reserved: str = ""
    transducers: List[str] = field(default_factory=list)
    physical_dimensions: List[str] = field(default_factory=list)
    prefiltering: List[str] = field(default_factory=list)

    @property
    def duration(self) -> float:
        return self.n_records * self.record_duration

    @property
    def n_signals(self) -> int:
        return len(self.labels)

    def channel_index(self, label: str) -> int:
        """Index of the first signal carrying ``label``."""
        try:
            return self.labels.index(label)
        except ValueError:
            raise KeyError(f"channel {label!r} not in record {self.record_id or '<unnamed>'}") from None


def digital_to_physical(digital, dig_min: int, dig_max: int, phys_min: float, phys_max: float) -> np.ndarray:
    if dig_max == dig_min:
        raise ValueError("digital_max equals digital_min")
    gain = (phys_max - phys_min) / (dig_max - dig_min)
    return phys_min + (np.asarray(digital, dtype=np.float64) - dig_min) * gain


def _ascii(raw: bytes) -> str:
    return raw.decode("ascii", errors="replace").strip()


def _number(raw: bytes, offset: int, name: str, kind=float):
    text = _ascii(raw)
    try:
        value = float(text)
    except ValueError:
        raise EdfParseError(f"header field {name!r} is not numeric: {text!r}", offset) from None
    if kind is int:
        if value != int(value):
            raise EdfParseError(f"header field {name!r} is not an integer: {text!r}", offset)
        return int(value)
    return value


def parse_edf(data: bytes, record_id: str = "", header_only: bool = False) -> EdfRecord:
    """Decode EDF bytes; with ``header_only`` the sample lists stay empty."""
    data = bytes(data)
    if len(data) < 256:
        raise EdfParseError("file shorter than the 256-byte fixed header", len(data))
    header = {}
    offset = 0
    for name, width in _FIXED_FIELDS:
        header[name] = (data[offset : offset + width], offset)
        offset += width

    n_signals = _number(*header["n_signals"], "n_signals", int)
    n_records = _number(*header["n_records"], "n_records", int)
    record_duration = _number(*header["record_duration"], "record_duration")
    if n_signals < 1:
        raise EdfParseError(f"invalid signal count {n_signals}", header["n_signals"][1])
    if n_records < 0:
        raise EdfParseError(f"unknown or negative record count {n_records}", header["n_records"][1])
    if record_duration <= 0:
        raise EdfParseError(f"non-positive record duration {record_duration}", header["record_duration"][1])

    signal_header_end = 256 + 256 * n_signals
    if len(data) < signal_header_end:
        raise EdfParseError(f"truncated signal headers for {n_signals} signals", len(data))

    fields = {}
    for name, width in _SIGNAL_FIELDS:
        values = []
        for i in range(n_signals):
            values.append((data[offset : offset + width], offset))
            offset += width
        fields[name] = values

    labels = [_ascii(raw) for raw, _ in fields["label"]]
    phys_min = [_number(raw, off, "physical_min") for raw, off in fields["physical_min"]]
    phys_max = [_number(raw, off, "physical_max") for raw, off in fields["physical_max"]]
    dig_min = [_number(raw, off, "digital_min", int) for raw, off in fields["digital_min"]]
    dig_max = [_number(raw, off, "digital_max", int) for raw, off in fields["digital_max"]]
    spr = [_number(raw, off, "samples_per_record", int) for raw, off in fields["samples_per_record"]]
    for i in range(n_signals):
        if dig_max[i] == dig_min[i]:
            raise EdfParseError(f"signal {i} ({labels[i]!r}) has digital_max == digital_min", fields["digital_max"][i][1])
        if spr[i] < 1:
            raise EdfParseError(f"signal {i} has no samples per record", fields["samples_per_record"][i][1])

    frame = sum(spr)
    body = data[signal_header_end:]
    needed = frame * 2 * n_records
    if header_only:
        n_records_to_read = 0
    elif len(body) < needed:
        raise EdfParseError(
            f"truncated data: {n_records} records need {needed} bytes, found {len(body)}",
            signal_header_end + len(body),
        )
    else:
        n_records_to_read = n_records
    ints = np.frombuffer(body[: frame * 2 * n_records_to_read], dtype="<i2").reshape(n_records_to_read, frame)
    digital, samples = [], []
    start = 0
    for i in range(n_signals if not header_only else 0):
        d = ints[:, start : start + spr[i]].reshape(-1).astype(np.int16)
        start += spr[i]
        digital.append(d)
        samples.append(digital_to_physical(d, dig_min[i], dig_max[i], phys_min[i], phys_max[i]))

    return EdfRecord(
        labels=labels,
        sample_rates=[s / record_duration for s in spr],
        physical_min=phys_min,
        physical_max=phys_max,
        digital_min=dig_min,
        digital_max=dig_max,
        samples=samples,
        digital=digital,
        n_records=n_records,
        record_duration=record_duration,
        samples_per_record=spr,
        record_id=record_id,
        version=_ascii(header["version"][0]),
        patient=_ascii(header["patient"][0]),
        recording=_ascii(header["recording"][0]),
        start_date=_ascii(header["start_date"][0]),
        start_time=_ascii(header["start_time"][0]),
        reserved=_ascii(header["reserved"][0]),
        transducers=[_ascii(raw) for raw, _ in fields["transducer"]],
        physical_dimensions=[_ascii(raw) for raw, _ in fields["physical_dimension"]],
        prefiltering=[_ascii(raw) for raw, _ in fields["prefiltering"]],
    )


def read_edf(path: Union[str, Path], header_only: bool = False) -> EdfRecord:
    path = Path(path)
    if header_only:
        with open(path, "rb") as fh:
            head = fh.read(256)
            try:
                n_signals = int(head[252:256].decode("ascii").strip())
            except ValueError:
                raise EdfParseError("signal count is not numeric", 252) from None
            head += fh.read(256 * n_signals)
        return parse_edf(head, record_id=path.stem, header_only=True)
    return parse_edf(path.read_bytes(), record_id=path.stem)


def _field(value, width: int) -> bytes:
    if isinstance(value, float):
        text = repr(value) if value != int(value) else str(int(value))
    else:
        text = str(value)
    raw = text.encode("ascii")
    if len(raw) > width:
        raise ValueError(f"value {text!r} does not fit in {width} header bytes")
    return raw.ljust(width, b" ")


def write_edf(
    labels: Sequence[str],
    digital: Sequence[np.ndarray],
    samples_per_record: Sequence[int],
    record_duration: float,
    physical_min: Sequence[float],
    physical_max: Sequence[float],
    digital_min: Sequence[int],
    digital_max: Sequence[int],
    patient: str = "X",
    recording: str = "X",
    start_date: str = "01.01.00",
    start_time: str = "00.00.00",
    transducers: Sequence[str] = (),
    physical_dimensions: Sequence[str] = (),
    prefiltering: Sequence[str] = (),
) -> bytes:
    """Serialise digital samples into EDF bytes."""
    n_signals = len(labels)
    if not (len(digital) == len(samples_per_record) == n_signals):
        raise ValueError("labels, digital and samples_per_record must have equal lengths")
    n_records = None
    for d, spr in zip(digital, samples_per_record):
        if len(d) % spr:
            raise ValueError("signal length is not a whole number of records")
        count = len(d) // spr
        if n_records is not None and count != n_records:
            raise ValueError("signals span different numbers of records")
        n_records = count
    transducers = list(transducers) or [""] * n_signals
    physical_dimensions = list(physical_dimensions) or ["uV"] * n_signals
    prefiltering = list(prefiltering) or [""] * n_signals

    header_bytes = 256 + 256 * n_signals
    out = bytearray()
    out += _field("0", 8)
    out += _field(patient, 80)
    out += _field(recording, 80)
    out += _field(start_date, 8)
    out += _field(start_time, 8)
    out += _field(header_bytes, 8)
    out += _field("", 44)
    out += _field(n_records, 8)
    out += _field(record_duration, 8)
    out += _field(n_signals, 4)
    for values, width in (
        (labels, 16),
        (transducers, 80),
        (physical_dimensions, 8),
        (physical_min, 8),
        (physical_max, 8),
        (digital_min, 8),
        (digital_max, 8),
        (prefiltering, 80),
        (samples_per_record, 8),
        ([""] * n_signals, 32),
    ):
        for v in values:
            out += _field(v, width)
    assert len(out) == header_bytes

    blocks = [np.asarray(d, dtype="<i2").reshape(n_records, spr) for d, spr in zip(digital, samples_per_record)]
    out += np.concatenate(blocks, axis=1).tobytes()
    return bytes(out)
