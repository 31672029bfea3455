"""Loss, optimizer, training loop and evaluation metrics."""

from __future__ import annotations

import csv
import json
import logging
import math
import statistics
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np

from .model import ModelParams, ModelSpec, build_model, model_backward, model_forward

__all__ = [
    "TrainingDivergedError",
    "TrainConfig",
    "AdamState",
    "MetricsReport",
    "CvSummary",
    "METRIC_NAMES",
    "l2_penalty",
    "compute_loss",
    "adam_step",
    "iterate_minibatches",
    "predict_logits",
    "train",
    "compute_metrics",
    "aggregate_cv",
    "write_metrics_csv",
    "write_loss_curve_csv",
    "write_summary_json",
]

log = logging.getLogger(__name__)

METRIC_NAMES = ("sensitivity", "specificity", "f1", "precision", "accuracy")


class TrainingDivergedError(RuntimeError):
    """Raised when the loss or logits become non-finite."""


@dataclass
class TrainConfig:
    learning_rate: float = 0.0004
    batch_size: int = 30
    epochs: int = 60
    weight_decay: float = 0.01
    beta1: float = 0.9
    beta2: float = 0.999
    adam_epsilon: float = 1e-8
    seed: int = 0
    eval_batch_size: int = 30

    def __post_init__(self):
        if self.learning_rate <= 0 or self.batch_size < 1 or self.epochs < 0:
            raise ValueError("learning_rate and batch_size must be positive, epochs non-negative")
        if self.weight_decay < 0 or self.adam_epsilon <= 0:
            raise ValueError("weight_decay must be >= 0 and adam_epsilon > 0")
        if not (0 < self.beta1 < 1 and 0 < self.beta2 < 1):
            raise ValueError("Adam betas must lie in (0, 1)")


# Loss --------------------------------------------------------------------------


def l2_penalty(params: Dict[str, np.ndarray], weight_decay: float) -> float:
    """``weight_decay * sum(0.5 * ||theta||^2)`` over every trainable tensor."""
    total = 0.0
    for value in params.values():
        total += 0.5 * float(np.sum(np.square(value, dtype=np.float64)))
    return weight_decay * total


def compute_loss(
    logits: np.ndarray,
    labels: np.ndarray,
    params: Optional[Dict[str, np.ndarray]] = None,
    weight_decay: float = 0.0,
) -> Tuple[float, np.ndarray]:
    """Mean softmax cross-entropy plus the L2 penalty.

    Returns ``(loss, d_loss / d_logits)``. The penalty's own gradient is
    ``weight_decay * theta`` and is added by the caller.
    """
    logits = np.asarray(logits)
    labels = np.asarray(labels)
    if not np.all(np.isfinite(logits)):
        raise TrainingDivergedError("non-finite logits")
    if logits.ndim != 2 or labels.shape != (logits.shape[0],):
        raise ValueError(f"logits {logits.shape} and labels {labels.shape} disagree")
    if np.any((labels != 0) & (labels != 1)):
        raise ValueError("labels must be 0 or 1")
    n = logits.shape[0]
    shifted = logits - logits.max(axis=1, keepdims=True)
    log_norm = np.log(np.exp(shifted).sum(axis=1))
    log_probs = shifted - log_norm[:, None]
    idx = labels.astype(np.intp)
    loss = -float(log_probs[np.arange(n), idx].mean())
    grad = np.exp(log_probs)
    grad[np.arange(n), idx] -= 1.0
    grad /= n
    if params is not None and weight_decay:
        loss += l2_penalty(params, weight_decay)
    return loss, grad


# Optimizer -------------------------------------------------------------------


@dataclass
class AdamState:
    m: Dict[str, np.ndarray] = field(default_factory=dict)
    v: Dict[str, np.ndarray] = field(default_factory=dict)
    step: int = 0

    @classmethod
    def zeros_like(cls, params: Dict[str, np.ndarray]) -> "AdamState":
        return cls(
            m={k: np.zeros_like(v) for k, v in params.items()},
            v={k: np.zeros_like(v) for k, v in params.items()},
        )


def adam_step(params: Dict[str, np.ndarray], grads: Dict[str, np.ndarray], state: AdamState, cfg: TrainConfig) -> None:
    """Bias-corrected Adam, updating ``params`` and ``state`` in place."""
    if set(grads) != set(params):
        raise ValueError(f"gradient names differ from parameter names: {sorted(set(params) ^ set(grads))}")
    state.step += 1
    b1, b2 = cfg.beta1, cfg.beta2
    c1 = 1.0 - b1**state.step
    c2 = 1.0 - b2**state.step
    for name, theta in params.items():
        g = grads[name]
        if g.shape != theta.shape:
            raise ValueError(f"{name}: gradient shape {g.shape} != parameter shape {theta.shape}")
        m = state.m.setdefault(name, np.zeros_like(theta))
        v = state.v.setdefault(name, np.zeros_like(theta))
        m *= b1
        m += (1.0 - b1) * g
        v *= b2
        v += (1.0 - b2) * g * g
        theta -= cfg.learning_rate * (m / c1) / (np.sqrt(v / c2) + cfg.adam_epsilon)


# Training loop -------------------------------------------------------------------


def iterate_minibatches(n: int, batch_size: int, rng: np.random.Generator):
    order = rng.permutation(n)
    for start in range(0, n, batch_size):
        yield order[start : start + batch_size]


def predict_logits(params: ModelParams, x: np.ndarray, batch_size: int = 30) -> np.ndarray:
    """Inference-mode logits, evaluated in chunks."""
    chunks = []
    for start in range(0, len(x), batch_size):
        logits, _, _ = model_forward(params, x[start : start + batch_size], mode="infer", keep_cache=False)
        chunks.append(logits)
    if not chunks:
        return np.zeros((0, 2))
    return np.concatenate(chunks, axis=0)


def _accuracy(logits: np.ndarray, labels: np.ndarray) -> float:
    return float(np.mean(logits.argmax(axis=1) == labels))


def train(
    spec: ModelSpec,
    x_train: np.ndarray,
    y_train: np.ndarray,
    x_val: np.ndarray,
    y_val: np.ndarray,
    cfg: TrainConfig,
    params: Optional[ModelParams] = None,
) -> Tuple[ModelParams, List[dict]]:
    """Fit a model and keep the epoch with the best validation accuracy.

    Returns ``(params, curve)`` where ``curve`` has one dict per epoch with
    ``epoch``, ``train_loss``, ``val_loss`` and ``val_accuracy``. Ties in
    validation accuracy keep the earlier epoch.
    """
    if params is None:
        params = build_model(spec, rng_seed=cfg.seed)
    y_train = np.asarray(y_train, dtype=np.intp)
    y_val = np.asarray(y_val, dtype=np.intp)
    x_train = np.asarray(x_train, dtype=spec.dtype)
    x_val = np.asarray(x_val, dtype=spec.dtype)
    if len(x_train) == 0:
        raise ValueError("empty training set")

    rng = np.random.default_rng(np.random.SeedSequence([cfg.seed, 1]))
    named = params.named_parameters()
    state = AdamState.zeros_like(named)
    best = params.copy()
    best_acc = -math.inf
    curve: List[dict] = []

    for epoch in range(cfg.epochs):
        batch_losses = []
        for idx in iterate_minibatches(len(x_train), cfg.batch_size, rng):
            logits, _, cache = model_forward(params, x_train[idx], mode="train")
            loss, dlogits = compute_loss(logits, y_train[idx], named, cfg.weight_decay)
            if not math.isfinite(loss):
                raise TrainingDivergedError(f"non-finite loss at epoch {epoch}")
            grads = model_backward(params, cache, dlogits)
            if cfg.weight_decay:
                for name, theta in named.items():
                    grads[name] = grads[name] + cfg.weight_decay * theta
            adam_step(named, grads, state, cfg)
            if spec.recurrent_clip is not None:
                params.clip_recurrent(spec.recurrent_clip)
            batch_losses.append(loss)

        val_loss, val_acc = math.nan, math.nan
        if len(x_val):
            val_logits = predict_logits(params, x_val, cfg.eval_batch_size)
            val_loss, _ = compute_loss(val_logits, y_val, named, cfg.weight_decay)
            val_acc = _accuracy(val_logits, y_val)
        curve.append(
            {
                "epoch": epoch,
                "train_loss": float(np.mean(batch_losses)),
                "val_loss": float(val_loss),
                "val_accuracy": float(val_acc),
            }
        )
        log.debug("epoch %d train_loss=%.5f val_loss=%.5f val_acc=%.4f", epoch, curve[-1]["train_loss"], val_loss, val_acc)
        score = val_acc if len(x_val) else -curve[-1]["train_loss"]
        if score > best_acc:
            best_acc = score
            best = params.copy()

    if cfg.epochs == 0:
        return params, curve
    return best, curve


# Metrics ---------------------------------------------------------------------


@dataclass
class MetricsReport:
    """Confusion counts with derived metrics.

    A metric whose denominator is zero is ``None`` (undefined), never 0 or 1.
    """

    tp: int
    fp: int
    tn: int
    fn: int
    sensitivity: Optional[float]
    specificity: Optional[float]
    precision: Optional[float]
    f1: Optional[float]
    accuracy: Optional[float]

    @property
    def total(self) -> int:
        return self.tp + self.fp + self.tn + self.fn

    @classmethod
    def from_counts(cls, tp: int, fp: int, tn: int, fn: int) -> "MetricsReport":
        def ratio(num, den):
            return num / den if den else None

        sens = ratio(tp, tp + fn)
        prec = ratio(tp, tp + fp)
        if sens is None or prec is None or (sens + prec) == 0:
            f1 = None
        else:
            f1 = 2 * prec * sens / (prec + sens)
        return cls(
            tp=tp,
            fp=fp,
            tn=tn,
            fn=fn,
            sensitivity=sens,
            specificity=ratio(tn, tn + fp),
            precision=prec,
            f1=f1,
            accuracy=ratio(tp + tn, tp + fp + tn + fn),
        )

    def as_dict(self) -> dict:
        return asdict(self)


def compute_metrics(predictions, labels) -> MetricsReport:
    """Confusion-matrix metrics with label 1 (seizure) as the positive class."""
    predictions = np.asarray(predictions)
    labels = np.asarray(labels)
    if predictions.shape != labels.shape:
        raise ValueError(f"predictions {predictions.shape} and labels {labels.shape} differ in length")
    pos = labels == 1
    pred_pos = predictions == 1
    tp = int(np.sum(pos & pred_pos))
    fn = int(np.sum(pos & ~pred_pos))
    fp = int(np.sum(~pos & pred_pos))
    tn = int(np.sum(~pos & ~pred_pos))
    return MetricsReport.from_counts(tp=tp, fp=fp, tn=tn, fn=fn)


@dataclass
class CvSummary:
    rounds: List[MetricsReport]
    mean: Dict[str, Optional[float]]
    std: Dict[str, Optional[float]]

    def as_dict(self) -> dict:
        return {
            "n_rounds": len(self.rounds),
            "mean": self.mean,
            "std": self.std,
            "rounds": [r.as_dict() for r in self.rounds],
        }


def aggregate_cv(rounds: Sequence[MetricsReport]) -> CvSummary:
    """Mean and population standard deviation of each metric over rounds.

    Undefined values are skipped; a metric undefined in every round stays
    undefined.
    """
    rounds = list(rounds)
    if not rounds:
        raise ValueError("aggregate_cv needs at least one round")
    mean, std = {}, {}
    for name in METRIC_NAMES:
        values = [float(getattr(r, name)) for r in rounds if getattr(r, name) is not None]
        if not values:
            mean[name] = std[name] = None
        else:
            # exact rational arithmetic: identical rounds give std exactly 0
            mean[name] = float(statistics.mean(values))
            std[name] = float(statistics.pstdev(values))
    return CvSummary(rounds=rounds, mean=mean, std=std)


# Serialization -------------------------------------------------------------------

UNDEFINED = "undefined"
METRICS_CSV_HEADER = ("round", "status", "tp", "fp", "tn", "fn") + METRIC_NAMES
LOSS_CSV_HEADER = ("round", "epoch", "train_loss", "val_loss", "val_accuracy")


def _fmt(value) -> str:
    if value is None:
        return UNDEFINED
    if isinstance(value, float):
        return repr(value)
    return str(value)


def write_metrics_csv(path, rows: Sequence[Tuple[int, str, Optional[MetricsReport]]]) -> None:
    """One row per round: ``(round, status, report)``; failed rounds have no report."""
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(METRICS_CSV_HEADER)
        for round_idx, status, report in rows:
            if report is None:
                writer.writerow([round_idx, status] + [UNDEFINED] * (len(METRICS_CSV_HEADER) - 2))
                continue
            d = report.as_dict()
            writer.writerow([round_idx, status] + [_fmt(d[k]) for k in METRICS_CSV_HEADER[2:]])


def write_loss_curve_csv(path, curves: Dict[int, List[dict]]) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(LOSS_CSV_HEADER)
        for round_idx in sorted(curves):
            for row in curves[round_idx]:
                writer.writerow([round_idx] + [_fmt(row[k]) for k in LOSS_CSV_HEADER[1:]])


def write_summary_json(path, summary: CvSummary, extra: Optional[dict] = None) -> None:
    payload = summary.as_dict()
    if extra:
        payload.update(extra)
    Path(path).write_text(json.dumps(payload, indent=2, sort_keys=True) + "\n")
