"""Central finite-difference checks of every hand-written backward pass.

Each check evaluates a random linear functional ``sum(R * output)`` of a
layer (or the cross-entropy of the whole model), perturbs one input or
parameter entry at a time by ``+-h``, and compares the numerical slope with
the analytic gradient. Parameters are jittered away from their initial
values first: zero biases can put ReLU inputs exactly on the kink.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Dict, Iterable, List

import numpy as np

from . import layers as L
from .model import ModelSpec, build_model, dense_block_backward, dense_block_forward, model_backward, model_forward
from .training import compute_loss

__all__ = ["GradcheckResult", "numerical_gradient", "relative_error", "check_layers", "check_model", "run_gradcheck"]

STEP = 1e-5
TOLERANCE = 1e-5


@dataclass
class GradcheckResult:
    target: str
    tensor: str
    seed: int
    error: float

    @property
    def passed(self) -> bool:
        return self.error < TOLERANCE


def numerical_gradient(f: Callable[[], float], array: np.ndarray, h: float = STEP) -> np.ndarray:
    """Central differences of ``f`` w.r.t. every entry of ``array`` (mutated in place, then restored)."""
    grad = np.zeros_like(array)
    for idx in np.ndindex(array.shape):
        orig = array[idx]
        array[idx] = orig + h
        plus = f()
        array[idx] = orig - h
        minus = f()
        array[idx] = orig
        grad[idx] = (plus - minus) / (2 * h)
    return grad


def relative_error(analytic: np.ndarray, numeric: np.ndarray) -> float:
    """``||a - n|| / (||a|| + ||n||)``, or 0 when both vanish."""
    denom = np.linalg.norm(analytic) + np.linalg.norm(numeric)
    if denom == 0:
        return 0.0
    return float(np.linalg.norm(analytic - numeric) / denom)


def _jitter(rng, *arrays, scale=0.1):
    for a in arrays:
        a += scale * rng.normal(size=a.shape)


def _compare(target, seed, f, tensors: Dict[str, np.ndarray], grads: Dict[str, np.ndarray]) -> List[GradcheckResult]:
    return [
        GradcheckResult(target, name, seed, relative_error(grads[name], numerical_gradient(f, arr)))
        for name, arr in tensors.items()
    ]


def _check_attention(seed: int) -> List[GradcheckResult]:
    rng = np.random.default_rng(seed)
    n_ch = 4
    p = L.AttentionParams(kernel=rng.normal(0, 0.5, (n_ch, n_ch)), bias=rng.normal(0, 0.5, n_ch))
    x = rng.normal(size=(3, 5, n_ch))
    r = rng.normal(size=x.shape)

    def f():
        return float(np.sum(r * L.attention_forward(x, p)[0]))

    _, _, cache = L.attention_forward(x, p)
    dx, g = L.attention_backward(cache, r)
    g["x"] = dx
    return _compare("attention", seed, f, {"x": x, "kernel": p.kernel, "bias": p.bias}, g)


def _check_indrnn(seed: int, act_out: str = "relu") -> List[GradcheckResult]:
    rng = np.random.default_rng(seed)
    n_fe, n_hid = 3, 4
    p = L.IndRNNParams(
        input_weights=rng.normal(0, 0.7, (n_fe, n_hid)),
        recurrent_weights=rng.uniform(0, 1, n_hid),
        hidden_bias=rng.normal(0, 0.3, n_hid),
        output_weights=rng.normal(0, 0.7, (n_hid, n_hid)),
        output_bias=rng.normal(0, 0.3, n_hid),
    )
    x = rng.normal(size=(2, 6, n_fe))
    y, cache = L.indrnn_forward(x, p, "relu", act_out)
    r = rng.normal(size=y.shape)

    def f():
        return float(np.sum(r * L.indrnn_forward(x, p, "relu", act_out)[0]))

    dx, g = L.indrnn_backward(cache, r)
    g["x"] = dx
    tensors = {"x": x}
    tensors.update({k: getattr(p, k) for k in ("input_weights", "recurrent_weights", "hidden_bias", "output_weights", "output_bias")})
    return _compare(f"indrnn[{act_out}]", seed, f, tensors, g)


def _check_batchnorm(seed: int, mode: str) -> List[GradcheckResult]:
    rng = np.random.default_rng(seed)
    n_feat = 4
    p = L.BatchNormParams.create(n_feat)
    _jitter(rng, p.gamma, p.beta, scale=0.5)
    p.running_mean = rng.normal(size=n_feat)
    p.running_var = rng.uniform(0.5, 2.0, n_feat)
    x = rng.normal(1.0, 2.0, size=(3, 5, n_feat))
    r = rng.normal(size=x.shape)

    def f():
        return float(np.sum(r * L.batchnorm_apply(x, p, mode)[0]))

    _, cache = L.batchnorm_apply(x, p, mode)
    dx, g = L.batchnorm_backward(cache, r)
    g["x"] = dx
    return _compare(f"batchnorm[{mode}]", seed, f, {"x": x, "gamma": p.gamma, "beta": p.beta}, g)


def _check_fc(seed: int, activation: str) -> List[GradcheckResult]:
    rng = np.random.default_rng(seed)
    p = L.FcParams(weights=rng.normal(size=(5, 3)), bias=rng.normal(size=3))
    x = rng.normal(size=(4, 5))
    r = rng.normal(size=(4, 3))

    def f():
        return float(np.sum(r * L.fc_forward(x, p, activation)[0]))

    _, cache = L.fc_forward(x, p, activation)
    dx, g = L.fc_backward(cache, r)
    g["x"] = dx
    return _compare(f"fc[{activation}]", seed, f, {"x": x, "weights": p.weights, "bias": p.bias}, g)


def _check_pooling(seed: int) -> List[GradcheckResult]:
    rng = np.random.default_rng(seed)
    x = rng.normal(size=(2, 7, 3))
    r_max = rng.normal(size=(2, 3, 3))
    r_avg = rng.normal(size=(2, 3))
    _, max_cache = L.maxpool_time(x)
    _, avg_cache = L.avgpool_time(x)
    dmax, _ = L.maxpool_backward(max_cache, r_max)
    davg, _ = L.avgpool_backward(avg_cache, r_avg)
    return [
        GradcheckResult(
            "maxpool", "x", seed, relative_error(dmax, numerical_gradient(lambda: float(np.sum(r_max * L.maxpool_time(x)[0])), x))
        ),
        GradcheckResult(
            "avgpool", "x", seed, relative_error(davg, numerical_gradient(lambda: float(np.sum(r_avg * L.avgpool_time(x)[0])), x))
        ),
    ]


def _check_dense_block(seed: int) -> List[GradcheckResult]:
    rng = np.random.default_rng(seed)
    spec = ModelSpec.from_name("DIndRNN-(1,3)", n_channels=3, state_sizes=[4])
    params = build_model(spec, rng_seed=seed)
    for arr in params.named_parameters().values():
        _jitter(rng, arr)
    rnns, bns = params.indrnn[0], params.batchnorm[0]
    x = rng.normal(size=(2, 6, 3))
    r = rng.normal(size=(2, 6, 4))

    def f():
        return float(np.sum(r * dense_block_forward(x, rnns, bns, "train", update_stats=False)[0]))

    _, cache = dense_block_forward(x, rnns, bns, "train", update_stats=False)
    dx, comp = dense_block_backward(cache, r)
    tensors, grads = {"x": x}, {"x": dx}
    for i, ((rg, bg), rnn, bn) in enumerate(zip(comp, rnns, bns)):
        for k, v in rg.items():
            tensors[f"{i}.{k}"], grads[f"{i}.{k}"] = getattr(rnn, k), v
        for k, v in bg.items():
            tensors[f"{i}.{k}"], grads[f"{i}.{k}"] = getattr(bn, k), v
    return _compare("dense_block", seed, f, tensors, grads)


def check_layers(seed: int) -> List[GradcheckResult]:
    results = []
    results += _check_attention(seed)
    results += _check_indrnn(seed, "relu")
    results += _check_indrnn(seed, "identity")
    results += _check_batchnorm(seed, "train")
    results += _check_batchnorm(seed, "infer")
    results += _check_fc(seed, "relu")
    results += _check_fc(seed, "identity")
    results += _check_pooling(seed)
    results += _check_dense_block(seed)
    return results


def check_model(
    seed: int,
    n_blocks: int = 2,
    layers_per_block: int = 1,
    state: int = 4,
    n_steps: int = 8,
    n_channels: int = 3,
) -> List[GradcheckResult]:
    """End-to-end check of cross-entropy w.r.t. every parameter of a small ADIndRNN."""
    rng = np.random.default_rng(seed)
    spec = ModelSpec.from_name(
        f"ADIndRNN-({n_blocks},{layers_per_block})", n_channels=n_channels, state_sizes=[state] * n_blocks
    )
    params = build_model(spec, rng_seed=seed)
    for arr in params.named_parameters().values():
        _jitter(rng, arr)
    x = rng.normal(size=(3, n_steps, n_channels))
    y = np.array([0, 1, 1])

    def f():
        logits, _, _ = model_forward(params, x, "train", update_stats=False)
        return compute_loss(logits, y)[0]

    logits, _, cache = model_forward(params, x, "train", update_stats=False)
    _, dlogits = compute_loss(logits, y)
    grads = model_backward(params, cache, dlogits)
    return _compare(f"model {spec.name}", seed, f, params.named_parameters(), grads)


def run_gradcheck(seeds: Iterable[int] = range(5)) -> List[GradcheckResult]:
    results = []
    for seed in seeds:
        results += check_layers(seed)
        results += check_model(seed)
    return results
