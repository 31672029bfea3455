import numpy as np

from adindrnn.data.edf import EdfRecord


def make_record(duration, rate=1.0, n_ch=2, record_id="rec", labels=None, seed=0):
    """In-memory record of ``duration`` seconds with random signals."""
    n = int(round(duration * rate))
    rng = np.random.default_rng(seed)
    labels = labels or [f"C{i}" for i in range(n_ch)]
    return EdfRecord(
        labels=list(labels),
        sample_rates=[rate] * len(labels),
        physical_min=[-1.0] * len(labels),
        physical_max=[1.0] * len(labels),
        digital_min=[-32768] * len(labels),
        digital_max=[32767] * len(labels),
        samples=[rng.normal(size=n) for _ in labels],
        digital=[],
        n_records=int(duration),
        record_duration=1.0,
        samples_per_record=[int(rate)] * len(labels),
        record_id=record_id,
    )


def brute_force_windows(duration, seg_len, intervals):
    """Independent oracle on a one-second grid: [(start, seizure_seconds, label)].

    Assumes whole-second durations, lengths and interval bounds.
    """
    cells = [0] * duration
    for s, e in intervals:
        for sec in range(int(s), int(e)):
            cells[sec] = 1
    out = []
    start = 0
    while start + seg_len <= duration:
        out.append(start)
        start += seg_len
    if start < duration and any(cells[start:duration]):
        out.append(duration - seg_len)
    rows = []
    for s in out:
        secs = sum(cells[s : s + seg_len])
        rows.append((float(s), float(secs), int(secs > 0)))
    return rows
