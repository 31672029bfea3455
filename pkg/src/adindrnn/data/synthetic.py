"""Synthetic EEG-like data for tests, demos and desk-scale experiments.

Background activity is a few random-phase rhythms plus AR(1) noise.
Seizure activity adds a stronger low-frequency rhythm on a subset of
channels, so both amplitude and frequency carry the class.
"""

from __future__ import annotations

from typing import List, Optional, Sequence, Tuple

import numpy as np
from scipy.signal import lfilter

from .annotations import SeizureAnnotation
from .edf import EdfRecord

__all__ = ["background_eeg", "seizure_burst", "make_synthetic_segments", "make_synthetic_records"]


def background_eeg(rng: np.random.Generator, n_steps: int, n_channels: int, rate: float, amplitude: float = 20.0) -> np.ndarray:
    t = np.arange(n_steps) / rate
    out = np.zeros((n_steps, n_channels))
    for c in range(n_channels):
        for freq, scale in ((10.0, 1.0), (6.0, 0.6), (20.0, 0.3)):
            f = freq * rng.uniform(0.9, 1.1)
            out[:, c] += scale * np.sin(2 * np.pi * f * t + rng.uniform(0, 2 * np.pi))
        out[:, c] += 0.25 * lfilter([1.0], [1.0, -0.9], rng.normal(size=n_steps))
    return amplitude * out / 2.0


def seizure_burst(rng: np.random.Generator, n_steps: int, rate: float, amplitude: float = 60.0) -> np.ndarray:
    """Rhythmic 3-5 Hz discharge with a harmonic, for one channel."""
    t = np.arange(n_steps) / rate
    f = rng.uniform(3.0, 5.0)
    phase = rng.uniform(0, 2 * np.pi)
    wave = np.sin(2 * np.pi * f * t + phase) + 0.5 * np.sin(4 * np.pi * f * t + 2 * phase)
    return amplitude * wave / 1.5


def make_synthetic_segments(
    n_segments: int = 400,
    n_channels: int = 3,
    n_steps: int = 256,
    rate: float = 256.0,
    seed: int = 0,
    seizure_channels: Optional[Sequence[int]] = None,
    seizure_amplitude: float = 60.0,
) -> Tuple[np.ndarray, np.ndarray]:
    """Balanced labelled windows ``(X, y)`` with ``X`` of shape ``(n, n_steps, n_channels)``.

    Seizure windows carry the burst on ``seizure_channels`` (default: the
    first channel only).
    """
    rng = np.random.default_rng(seed)
    chans = list(seizure_channels) if seizure_channels is not None else [0]
    y = np.array([i % 2 for i in range(n_segments)], dtype=np.intp)
    y = y[rng.permutation(n_segments)]
    x = np.empty((n_segments, n_steps, n_channels))
    for i in range(n_segments):
        x[i] = background_eeg(rng, n_steps, n_channels, rate)
        if y[i] == 1:
            for c in chans:
                x[i, :, c] += seizure_burst(rng, n_steps, rate, seizure_amplitude)
    return x, y


def make_synthetic_records(
    n_records: int = 4,
    duration: float = 600.0,
    rate: float = 256.0,
    channels: Sequence[str] = ("FP1-F7", "F7-T7", "T7-P7"),
    seizures_per_record: int = 3,
    seizure_seconds: Tuple[float, float] = (8.0, 30.0),
    seed: int = 0,
    seizure_channels: Optional[Sequence[int]] = None,
    whole_seconds: bool = True,
) -> List[Tuple[EdfRecord, SeizureAnnotation]]:
    """Continuous multichannel records with annotated seizure intervals.

    Seizure onsets and durations are whole seconds when ``whole_seconds``.
    Intervals never overlap and keep a 5 s gap between them.
    """
    rng = np.random.default_rng(seed)
    n_ch = len(channels)
    chans = list(seizure_channels) if seizure_channels is not None else list(range(min(2, n_ch)))
    n_total = int(round(duration * rate))
    out = []
    for r in range(n_records):
        record_id = f"syn{r:02d}"
        signals = background_eeg(rng, n_total, n_ch, rate)
        intervals: List[Tuple[float, float]] = []
        attempts = 0
        while len(intervals) < seizures_per_record and attempts < 1000:
            attempts += 1
            length = rng.uniform(*seizure_seconds)
            start = rng.uniform(0, duration - length)
            if whole_seconds:
                length, start = float(round(length)), float(np.floor(start))
            end = start + length
            if end > duration or length <= 0:
                continue
            if any(start < e + 5 and end > s - 5 for s, e in intervals):
                continue
            intervals.append((start, end))
        intervals.sort()
        for s, e in intervals:
            i0, i1 = int(round(s * rate)), int(round(e * rate))
            for c in chans:
                signals[i0:i1, c] += seizure_burst(rng, i1 - i0, rate)
        record = EdfRecord(
            labels=list(channels),
            sample_rates=[rate] * n_ch,
            physical_min=[float(signals.min())] * n_ch,
            physical_max=[float(signals.max())] * n_ch,
            digital_min=[-32768] * n_ch,
            digital_max=[32767] * n_ch,
            samples=[signals[:, c].copy() for c in range(n_ch)],
            digital=[],
            n_records=int(round(duration)),
            record_duration=1.0,
            samples_per_record=[int(rate)] * n_ch,
            record_id=record_id,
        )
        out.append((record, SeizureAnnotation(record_id, intervals)))
    return out
