"""Acceptance criteria; each test prints one PASS/FAIL line (also shown in the pytest summary)."""

import json
import math
import os
import time
from pathlib import Path

import numpy as np
import pytest

from adindrnn.cli import main as cli_main
from adindrnn.data.annotations import SeizureAnnotation
from adindrnn.data.edf import digital_to_physical, parse_edf, write_edf
from adindrnn.data.segmentation import segment_record, segment_statistics
from adindrnn.data.synthetic import make_synthetic_segments
from adindrnn.gradcheck import run_gradcheck
from adindrnn.layers import AttentionParams, attention_forward
from adindrnn.model import ModelSpec, build_model, model_forward
from adindrnn.training import MetricsReport, TrainConfig, aggregate_cv, compute_metrics, predict_logits, train

from .conftest import ACCEPTANCE_LINES
from .helpers import brute_force_windows, make_record
from .test_data import random_fixture, random_pair

# tolerances and limits
GRAD_TOL = 1e-5
GRAD_SEEDS = 5
GRAD_TIME_LIMIT = 60.0
TABLE_DECIMALS = 4
ATTENTION_SUM_TOL = 1e-12
N_ATTENTION_INPUTS = 100
N_SEGMENTATION_PAIRS = 1000
N_EDF_FIXTURES = 10
LEARN_ACCURACY = 0.95
LEARN_EPOCHS = 30
LEARN_TIME_LIMIT = 300.0
ATTENTION_MARGIN = 0.02
N_COMPARISON_SEEDS = 5
STATS_TOL = 0.01


def report(number, title, passed, detail):
    line = f"AC{number} {'PASS' if passed else 'FAIL'} {title}: {detail}"
    print(line)
    ACCEPTANCE_LINES.append(line)
    assert passed, line


def test_ac1_gradient_correctness():
    start = time.perf_counter()
    results = run_gradcheck(range(GRAD_SEEDS))
    elapsed = time.perf_counter() - start
    worst = max(results, key=lambda r: r.error)
    targets = {r.target.split("[")[0].split(" ")[0] for r in results}
    covered = {"attention", "indrnn", "batchnorm", "fc", "model"} <= targets
    two_blocks = all("ADIndRNN-(2," in r.target for r in results if r.target.startswith("model"))
    report(
        1,
        "gradient correctness",
        covered and two_blocks and worst.error < GRAD_TOL and elapsed < GRAD_TIME_LIMIT,
        f"{len(results)} checks over {GRAD_SEEDS} seeds, max rel err {worst.error:.2e} ({worst.target} {worst.tensor}) "
        f"< {GRAD_TOL:g}, {elapsed:.1f} s < {GRAD_TIME_LIMIT:g} s",
    )


TABLE = {
    "sensitivity": ([0.91, 0.86, 0.91, 0.85, 0.86, 0.90, 0.93, 0.87, 0.89, 0.90], 0.8880, 0.0252),
    "specificity": ([0.85, 0.93, 0.87, 0.92, 0.86, 0.89, 0.88, 0.88, 0.87, 0.91], 0.8860, 0.0250),
    "f1": ([0.8835, 0.8912, 0.8922, 0.8808, 0.8600, 0.8955, 0.9073, 0.8744, 0.8812, 0.9045], 0.8871, 0.0134),
    "precision": ([0.8585, 0.9247, 0.8750, 0.9140, 0.8600, 0.8911, 0.8857, 0.8788, 0.8725, 0.9091], 0.8869, 0.0215),
    "accuracy": ([0.8800, 0.8950, 0.8900, 0.8850, 0.8600, 0.8950, 0.9050, 0.8750, 0.8800, 0.9050], 0.8870, 0.0133),
}


def test_ac2_table_metric_arithmetic():
    labels = np.array([1] * 100 + [0] * 100)
    preds = np.array([1] * 91 + [0] * 9 + [0] * 85 + [1] * 15)
    r = compute_metrics(preds, labels)
    row = tuple(round(getattr(r, k), TABLE_DECIMALS) for k in ("sensitivity", "specificity", "f1", "precision", "accuracy"))
    row_ok = (r.tp, r.fn, r.tn, r.fp) == (91, 9, 85, 15) and row == (0.9100, 0.8500, 0.8835, 0.8585, 0.8800)

    rounds = []
    for i in range(10):
        values = {k: TABLE[k][0][i] for k in TABLE}
        tp, tn = round(values["sensitivity"] * 100), round(values["specificity"] * 100)
        rounds.append(MetricsReport(tp=tp, fp=100 - tn, tn=tn, fn=100 - tp, **values))
    summary = aggregate_cv(rounds)
    mismatches = [
        k
        for k, (_, ave, std) in TABLE.items()
        if round(summary.mean[k], TABLE_DECIMALS) != ave or round(summary.std[k], TABLE_DECIMALS) != std
    ]
    report(
        2,
        "ten-round CV table arithmetic",
        row_ok and not mismatches,
        f"row 1 -> {row}; Ave./Std. reproduced for {5 - len(mismatches)}/5 columns"
        + (f" (mismatch: {mismatches})" if mismatches else ""),
    )


def test_ac3_shape_trace():
    spec = ModelSpec.from_name("ADIndRNN-(3,3)", n_channels=17, n_steps=5888)
    params = build_model(spec, rng_seed=0)
    ok, traces = True, []
    for n in (1, 30):
        x = np.random.default_rng(n).normal(size=(n, 5888, 17))
        _, _, cache = model_forward(params, x, "infer", keep_cache=False)
        expected = [(n, 5888, 17), (n, 2944, 80), (n, 1472, 120), (n, 736, 160), (n, 160), (n, 100), (n, 2)]
        ok &= cache.shapes == expected
        traces.append(" -> ".join(str(s) for s in cache.shapes))
    report(3, "shape trace", ok, " | ".join(traces))


def test_ac4_attention_invariants():
    rng = np.random.default_rng(0)
    worst, negative = 0.0, False
    for _ in range(N_ATTENTION_INPUTS):
        n_ch = int(rng.integers(2, 24))
        p = AttentionParams(kernel=rng.normal(size=(n_ch, n_ch)), bias=rng.normal(size=n_ch))
        x = rng.normal(size=(int(rng.integers(1, 5)), int(rng.integers(1, 300)), n_ch)) * rng.uniform(0.1, 50)
        _, w, _ = attention_forward(x, p)
        negative |= bool(np.any(w < 0))
        worst = max(worst, float(np.max(np.abs(w.sum(axis=1) - 1.0))))
    uniform = True
    for n_ch in (1, 3, 17, 23):
        x = rng.normal(size=(4, 5888, n_ch))
        _, w, _ = attention_forward(x, AttentionParams(np.zeros((n_ch, n_ch)), np.zeros(n_ch)))
        uniform &= bool(np.all(w == 1.0 / n_ch))
    report(
        4,
        "attention invariants",
        not negative and worst <= ATTENTION_SUM_TOL and uniform,
        f"{N_ATTENTION_INPUTS} inputs, nonnegative={not negative}, max |sum-1| {worst:.1e} <= {ATTENTION_SUM_TOL:g}, "
        f"zero params exactly uniform={uniform}",
    )


def test_ac5_segmentation_oracle():
    rng = np.random.default_rng(5)
    bad = []
    n_seizure = 0
    for _ in range(N_SEGMENTATION_PAIRS):
        duration, seg_len, intervals = random_pair(rng)
        rec = make_record(duration, rate=2.0, n_ch=1)
        segs = segment_record(rec, SeizureAnnotation("rec", intervals), seg_len, ["C0"], keep_data=False)
        got = [(s.start, s.seizure_seconds, s.label) for s in segs]
        bounds_ok = all(s.start_sample == int(s.start * 2) and s.n_samples == 2 * seg_len for s in segs)
        n_seizure += sum(s.label for s in segs)
        if got != brute_force_windows(duration, seg_len, intervals) or not bounds_ok:
            bad.append((duration, seg_len, intervals))
    report(
        5,
        "segmentation oracle",
        not bad,
        f"{N_SEGMENTATION_PAIRS - len(bad)}/{N_SEGMENTATION_PAIRS} random pairs match the brute-force oracle exactly "
        f"({n_seizure} seizure windows)",
    )


def test_ac6_edf_round_trip():
    rng = np.random.default_rng(6)
    identical = 0
    for _ in range(N_EDF_FIXTURES):
        kw = random_fixture(rng)
        rec = parse_edf(write_edf(**kw))
        same = (
            rec.labels == kw["labels"]
            and rec.samples_per_record == kw["samples_per_record"]
            and rec.physical_min == kw["physical_min"]
            and rec.physical_max == kw["physical_max"]
            and rec.digital_min == kw["digital_min"]
            and rec.digital_max == kw["digital_max"]
            and rec.record_duration == kw["record_duration"]
            and rec.patient == kw["patient"]
            and rec.recording == kw["recording"]
        )
        for i, d in enumerate(kw["digital"]):
            phys = digital_to_physical(d, kw["digital_min"][i], kw["digital_max"][i], kw["physical_min"][i], kw["physical_max"][i])
            same &= rec.digital[i].tobytes() == d.astype("<i2").tobytes() and rec.samples[i].tobytes() == phys.tobytes()
        identical += bool(same)
    mid = parse_edf(write_edf(["A"], [np.zeros(4, np.int16)], [4], 1.0, [-327.68], [327.67], [-32768], [32767])).samples[0]
    report(
        6,
        "EDF round-trip",
        identical == N_EDF_FIXTURES and np.all(mid == 0.0),
        f"{identical}/{N_EDF_FIXTURES} fixtures bit-identical, mid-scale digital 0 -> {float(mid[0])!r}",
    )


def learn(model, seed, epochs=LEARN_EPOCHS):
    x, y = make_synthetic_segments(n_segments=400, n_channels=3, n_steps=256, seed=seed)
    spec = ModelSpec.from_name(model, n_channels=3, state_sizes=[8, 16], fc_sizes=(16, 2), n_steps=256)
    cfg = TrainConfig(learning_rate=0.003, batch_size=30, epochs=epochs, seed=seed)
    params, _ = train(spec, x[:280], y[:280], x[280:340], y[280:340], cfg)
    return float(np.mean(predict_logits(params, x[340:]).argmax(axis=1) == y[340:]))


def test_ac7_synthetic_learnability():
    start = time.perf_counter()
    first = learn("ADIndRNN-(2,2)", 0)
    first_time = time.perf_counter() - start
    with_attention = [first] + [learn("ADIndRNN-(2,2)", s) for s in range(1, N_COMPARISON_SEEDS)]
    without = [learn("DIndRNN-(2,2)", s) for s in range(N_COMPARISON_SEEDS)]
    a, b = float(np.mean(with_attention)), float(np.mean(without))
    report(
        7,
        "synthetic learnability",
        first >= LEARN_ACCURACY and first_time < LEARN_TIME_LIMIT and a >= b - ATTENTION_MARGIN,
        f"ADIndRNN-(2,2) test acc {first:.3f} >= {LEARN_ACCURACY} in {LEARN_EPOCHS} epochs ({first_time:.0f} s); "
        f"mean over {N_COMPARISON_SEEDS} seeds: attention {a:.3f} vs none {b:.3f} (margin {ATTENTION_MARGIN})",
    )


def test_ac8_cv_determinism(tmp_path):
    cfg = {
        "data": {"synthetic": {"n_records": 3, "duration": 240, "seizures_per_record": 3, "seed": 2, "rate": 64.0}},
        "seg_len": 4,
        "model": "ADIndRNN-(2,1)",
        "state_sizes": [6, 8],
        "model_options": {"fc_sizes": [8, 2]},
        "train": {"epochs": 3, "learning_rate": 0.005, "batch_size": 16},
        "rounds": 3,
        "decimate": 2,
    }
    path = tmp_path / "cfg.json"
    path.write_text(json.dumps(cfg))
    for name in ("run1", "run2"):
        assert cli_main(["cv", "--config", str(path), "--seed", "17", "--out", str(tmp_path / name)]) == 0
    files = sorted(p.name for p in (tmp_path / "run1").iterdir())
    same = [f for f in files if (tmp_path / "run1" / f).read_bytes() == (tmp_path / "run2" / f).read_bytes()]
    report(8, "determinism", len(files) >= 3 and same == files, f"{len(same)}/{len(files)} output files byte-identical: {files}")


CHBMIT_ENV = "ADINDRNN_CHBMIT_DIR"


@pytest.mark.skipif(not os.environ.get(CHBMIT_ENV), reason=f"CHB-MIT not available (set {CHBMIT_ENV})")
def test_ac9_chbmit_statistics():
    from adindrnn.experiment import Corpus, DataConfig

    root = Path(os.environ[CHBMIT_ENV])
    corpus = Corpus(DataConfig(edf_dir=str(root), annotations=str(root / "**" / "*summary.txt")))
    stats = segment_statistics(corpus.segments(23), 23)
    ok = (
        stats.n_seizure_segments == 665
        and math.isclose(stats.mean_seizure_seconds, 16.99, abs_tol=STATS_TOL)
        and math.isclose(stats.type1_pct, 14.74, abs_tol=STATS_TOL)
        and math.isclose(stats.type2_pct, 76.09, abs_tol=STATS_TOL)
        and math.isclose(stats.type3_pct, 59.85, abs_tol=STATS_TOL)
    )
    report(
        9,
        "CHB-MIT statistics at 23 s",
        ok,
        f"{stats.n_seizure_segments} / {stats.mean_seizure_seconds:.2f} s / {stats.type1_pct:.2f}% / "
        f"{stats.type2_pct:.2f}% / {stats.type3_pct:.2f}%",
    )
