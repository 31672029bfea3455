"""Forward and backward passes for the layers of the network.

Every ``*_forward`` function is pure: it returns its output together with a
cache holding whatever the matching ``*_backward`` needs. Backward functions
return ``(input_grad, param_grads)`` where ``param_grads`` maps parameter
field names to arrays shaped like the parameters.

Sequence tensors are laid out as ``(samples, time_steps, features)``.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Dict, Optional, Tuple

import numpy as np

from .tensor import DimensionError, mean_over_axis, softmax_rows

__all__ = [
    "ACTIVATIONS",
    "AttentionParams",
    "IndRNNParams",
    "BatchNormParams",
    "FcParams",
    "attention_forward",
    "attention_backward",
    "indrnn_forward",
    "indrnn_backward",
    "batchnorm_apply",
    "batchnorm_backward",
    "update_running_stats",
    "maxpool_time",
    "maxpool_backward",
    "avgpool_time",
    "avgpool_backward",
    "fc_forward",
    "fc_backward",
    "layer_backward",
]

Grads = Dict[str, np.ndarray]


def _relu(z):
    return np.maximum(z, 0.0)


def _relu_grad(z):
    return (z > 0).astype(z.dtype)


def _identity(z):
    return z


def _identity_grad(z):
    return np.ones_like(z)


# name -> (function, derivative evaluated at the pre-activation)
ACTIVATIONS = {
    "relu": (_relu, _relu_grad),
    "identity": (_identity, _identity_grad),
}


def _activation(name):
    try:
        return ACTIVATIONS[name]
    except KeyError:
        raise ValueError(f"unknown activation {name!r}; expected one of {sorted(ACTIVATIONS)}") from None


@dataclass
class AttentionParams:
    kernel: np.ndarray  # (n_ch, n_ch)
    bias: np.ndarray  # (n_ch,), shared by every row

    def __post_init__(self):
        if self.kernel.ndim != 2 or self.kernel.shape[0] != self.kernel.shape[1]:
            raise DimensionError(f"attention kernel must be square, got {self.kernel.shape}")
        if self.bias.shape != (self.kernel.shape[0],):
            raise DimensionError(f"attention bias must have shape ({self.kernel.shape[0]},), got {self.bias.shape}")


@dataclass
class IndRNNParams:
    """Weights of one IndRNN layer.

    The recurrent weights are one scalar per hidden unit; each unit only
    sees its own previous state.
    """

    input_weights: np.ndarray  # (n_fe, n_hid)
    recurrent_weights: np.ndarray  # (n_hid,)
    hidden_bias: np.ndarray  # (n_hid,)
    output_weights: np.ndarray  # (n_hid, n_hid)
    output_bias: np.ndarray  # (n_hid,)

    def __post_init__(self):
        n_hid = self.input_weights.shape[1]
        if self.recurrent_weights.shape != (n_hid,):
            raise DimensionError(f"recurrent weights must be a vector of length {n_hid}, got {self.recurrent_weights.shape}")
        if self.hidden_bias.shape != (n_hid,) or self.output_bias.shape != (n_hid,):
            raise DimensionError("IndRNN biases must be vectors of the hidden size")
        if self.output_weights.shape != (n_hid, n_hid):
            raise DimensionError(f"output weights must be ({n_hid}, {n_hid}), got {self.output_weights.shape}")


@dataclass
class BatchNormParams:
    gamma: np.ndarray
    beta: np.ndarray
    running_mean: np.ndarray
    running_var: np.ndarray
    epsilon: float = 1e-5
    momentum: float = 0.9

    def __post_init__(self):
        if self.epsilon <= 0:
            raise ValueError("epsilon must be positive")
        if not 0 < self.momentum < 1:
            raise ValueError("momentum must lie in (0, 1)")

    @classmethod
    def create(cls, n_feat: int, dtype=np.float64, **kwargs) -> "BatchNormParams":
        return cls(
            gamma=np.ones(n_feat, dtype=dtype),
            beta=np.zeros(n_feat, dtype=dtype),
            running_mean=np.zeros(n_feat, dtype=dtype),
            running_var=np.ones(n_feat, dtype=dtype),
            **kwargs,
        )


@dataclass
class FcParams:
    weights: np.ndarray  # (n_in, n_out)
    bias: np.ndarray  # (n_out,)


# Attention -----------------------------------------------------------------


@dataclass
class AttentionCache:
    x: np.ndarray
    probs: np.ndarray  # row softmax, (n_sm * n_sp, n_ch)
    weights: np.ndarray  # per-sample channel weights, (n_sm, n_ch)
    kernel: np.ndarray


def attention_forward(x: np.ndarray, p: AttentionParams) -> Tuple[np.ndarray, np.ndarray, AttentionCache]:
    """Channel attention.

    Each time step is mapped through an affine transform and a softmax over
    channels; the per-step probabilities are averaged over time into one
    weight vector per sample, which then rescales every time step of ``x``.

    Returns ``(y, weights, cache)`` with ``weights`` of shape
    ``(n_sm, n_ch)``.
    """
    if x.ndim != 3:
        raise DimensionError(f"attention expects (samples, steps, channels), got {x.shape}")
    n_sm, n_sp, n_ch = x.shape
    if p.kernel.shape[0] != n_ch:
        raise DimensionError(f"input has {n_ch} channels but attention kernel is {p.kernel.shape}")
    rows = x.reshape(n_sm * n_sp, n_ch)
    probs = softmax_rows(rows @ p.kernel + p.bias)
    weights = mean_over_axis(probs.reshape(n_sm, n_sp, n_ch), 1)
    y = x * weights[:, None, :]
    return y, weights, AttentionCache(x=x, probs=probs, weights=weights, kernel=p.kernel)


def attention_backward(cache: AttentionCache, dy: np.ndarray) -> Tuple[np.ndarray, Grads]:
    x, probs, weights = cache.x, cache.probs, cache.weights
    if dy.shape != x.shape:
        raise DimensionError(f"upstream grad {dy.shape} does not match attention output {x.shape}")
    n_sm, n_sp, n_ch = x.shape
    dx = dy * weights[:, None, :]
    dweights = (dy * x).sum(axis=1)
    # mean over time, then copy: every step's probabilities get dweights / n_sp
    dprobs = np.broadcast_to(dweights[:, None, :] / n_sp, x.shape).reshape(n_sm * n_sp, n_ch)
    dlogits = probs * (dprobs - (dprobs * probs).sum(axis=1, keepdims=True))
    rows = x.reshape(n_sm * n_sp, n_ch)
    grads = {"kernel": rows.T @ dlogits, "bias": dlogits.sum(axis=0)}
    dx = dx + (dlogits @ cache.kernel.T).reshape(x.shape)
    return dx, grads


# IndRNN ----------------------------------------------------------------------


@dataclass
class IndRNNCache:
    x: np.ndarray
    hidden_pre: np.ndarray  # (n_sm, T, n_hid)
    hidden: np.ndarray  # (n_sm, T, n_hid)
    out_pre: np.ndarray
    params: IndRNNParams
    act_hidden: str
    act_out: str


def indrnn_forward(
    x_seq: np.ndarray,
    p: IndRNNParams,
    act_hidden: str = "relu",
    act_out: str = "relu",
) -> Tuple[np.ndarray, IndRNNCache]:
    """Run one IndRNN layer over a sequence, starting from a zero state.

    ``h_t = f(x_t W_in + h_{t-1} * u + b_hid)`` and
    ``y_t = g(h_t W_out + b_out)``.
    """
    if x_seq.ndim != 3:
        raise DimensionError(f"IndRNN expects (samples, steps, features), got {x_seq.shape}")
    n_sm, n_steps, n_fe = x_seq.shape
    if p.input_weights.shape[0] != n_fe:
        raise DimensionError(f"input has {n_fe} features but input weights are {p.input_weights.shape}")
    f_hid, _ = _activation(act_hidden)
    f_out, _ = _activation(act_out)
    n_hid = p.input_weights.shape[1]

    # input projection for all steps at once; only the recurrence is sequential
    projected = (x_seq.reshape(-1, n_fe) @ p.input_weights).reshape(n_sm, n_steps, n_hid) + p.hidden_bias
    hidden_pre = np.empty_like(projected)
    hidden = np.empty_like(projected)
    h = np.zeros((n_sm, n_hid), dtype=projected.dtype)
    u = p.recurrent_weights
    for t in range(n_steps):
        z = projected[:, t] + h * u
        hidden_pre[:, t] = z
        h = f_hid(z)
        hidden[:, t] = h

    out_pre = (hidden.reshape(-1, n_hid) @ p.output_weights).reshape(n_sm, n_steps, n_hid) + p.output_bias
    y = f_out(out_pre)
    return y, IndRNNCache(x_seq, hidden_pre, hidden, out_pre, p, act_hidden, act_out)


def indrnn_backward(cache: IndRNNCache, dy: np.ndarray) -> Tuple[np.ndarray, Grads]:
    """Backpropagation through time, running the recurrence in reverse."""
    p = cache.params
    x, hidden_pre, hidden = cache.x, cache.hidden_pre, cache.hidden
    if dy.shape != hidden.shape:
        raise DimensionError(f"upstream grad {dy.shape} does not match IndRNN output {hidden.shape}")
    n_sm, n_steps, n_hid = hidden.shape
    n_fe = x.shape[2]
    _, d_hid = _activation(cache.act_hidden)
    _, d_out = _activation(cache.act_out)

    d_out_pre = dy * d_out(cache.out_pre)
    flat_d_out = d_out_pre.reshape(-1, n_hid)
    grads = {
        "output_weights": hidden.reshape(-1, n_hid).T @ flat_d_out,
        "output_bias": flat_d_out.sum(axis=0),
    }
    dh_direct = (flat_d_out @ p.output_weights.T).reshape(n_sm, n_steps, n_hid)

    u = p.recurrent_weights
    d_pre = np.empty_like(hidden_pre)
    d_u = np.zeros_like(u)
    carry = np.zeros((n_sm, n_hid), dtype=hidden.dtype)
    for t in range(n_steps - 1, -1, -1):
        dz = (dh_direct[:, t] + carry) * d_hid(hidden_pre[:, t])
        d_pre[:, t] = dz
        if t > 0:
            d_u += (dz * hidden[:, t - 1]).sum(axis=0)
        carry = dz * u

    flat_d_pre = d_pre.reshape(-1, n_hid)
    grads["input_weights"] = x.reshape(-1, n_fe).T @ flat_d_pre
    grads["recurrent_weights"] = d_u
    grads["hidden_bias"] = flat_d_pre.sum(axis=0)
    dx = (flat_d_pre @ p.input_weights.T).reshape(x.shape)
    return dx, grads


# Batch normalization -------------------------------------------------------


@dataclass
class BatchNormCache:
    x_hat: np.ndarray
    inv_std: np.ndarray
    gamma: np.ndarray
    mode: str
    batch_mean: Optional[np.ndarray] = None
    batch_var: Optional[np.ndarray] = None


def batchnorm_apply(x: np.ndarray, p: BatchNormParams, mode: str = "train") -> Tuple[np.ndarray, BatchNormCache]:
    """Normalize the last axis.

    In ``"train"`` mode statistics are pooled over every other axis
    (samples and time steps together). Running statistics are *not* touched
    here; pass the cache to :func:`update_running_stats` to commit them.
    """
    if x.shape[-1] != p.gamma.shape[0]:
        raise DimensionError(f"last extent {x.shape[-1]} does not match {p.gamma.shape[0]} features")
    if mode == "train":
        axes = tuple(range(x.ndim - 1))
        mean = x.mean(axis=axes)
        var = x.var(axis=axes)
    elif mode == "infer":
        mean, var = p.running_mean, p.running_var
    else:
        raise ValueError(f"mode must be 'train' or 'infer', got {mode!r}")
    inv_std = 1.0 / np.sqrt(var + p.epsilon)
    x_hat = (x - mean) * inv_std
    y = p.gamma * x_hat + p.beta
    cache = BatchNormCache(x_hat=x_hat, inv_std=inv_std, gamma=p.gamma, mode=mode)
    if mode == "train":
        cache.batch_mean, cache.batch_var = mean, var
    return y, cache


def update_running_stats(p: BatchNormParams, cache: BatchNormCache) -> None:
    if cache.mode != "train":
        return
    m = p.momentum
    p.running_mean = m * p.running_mean + (1.0 - m) * cache.batch_mean
    p.running_var = m * p.running_var + (1.0 - m) * cache.batch_var


def batchnorm_backward(cache: BatchNormCache, dy: np.ndarray) -> Tuple[np.ndarray, Grads]:
    x_hat = cache.x_hat
    if dy.shape != x_hat.shape:
        raise DimensionError(f"upstream grad {dy.shape} does not match batchnorm output {x_hat.shape}")
    axes = tuple(range(dy.ndim - 1))
    grads = {"gamma": (dy * x_hat).sum(axis=axes), "beta": dy.sum(axis=axes)}
    dx_hat = dy * cache.gamma
    if cache.mode == "infer":
        return dx_hat * cache.inv_std, grads
    count = x_hat.size // x_hat.shape[-1]
    dx = (
        cache.inv_std
        / count
        * (count * dx_hat - dx_hat.sum(axis=axes) - x_hat * (dx_hat * x_hat).sum(axis=axes))
    )
    return dx, grads


# Pooling ---------------------------------------------------------------------


@dataclass
class MaxPoolCache:
    input_shape: Tuple[int, ...]
    argmax: np.ndarray  # (n_sm, T_out, F) index within each window
    window: int


def maxpool_time(x: np.ndarray, window: int = 2, stride: int = 2) -> Tuple[np.ndarray, MaxPoolCache]:
    """Max over non-overlapping time windows; a trailing partial window is dropped."""
    if x.ndim != 3:
        raise DimensionError(f"maxpool expects (samples, steps, features), got {x.shape}")
    if stride != window:
        raise ValueError("only non-overlapping pooling (stride == window) is supported")
    n_sm, n_steps, n_feat = x.shape
    if n_steps < window:
        raise DimensionError(f"sequence of {n_steps} steps is shorter than the pooling window {window}")
    n_out = n_steps // window
    blocks = x[:, : n_out * window].reshape(n_sm, n_out, window, n_feat)
    argmax = blocks.argmax(axis=2)
    y = np.take_along_axis(blocks, argmax[:, :, None, :], axis=2)[:, :, 0, :]
    return y, MaxPoolCache(x.shape, argmax, window)


def maxpool_backward(cache: MaxPoolCache, dy: np.ndarray) -> Tuple[np.ndarray, Grads]:
    n_sm, n_steps, n_feat = cache.input_shape
    n_out = dy.shape[1]
    if dy.shape != (n_sm, n_out, n_feat) or n_out != n_steps // cache.window:
        raise DimensionError(f"upstream grad {dy.shape} does not match maxpool output")
    blocks = np.zeros((n_sm, n_out, cache.window, n_feat), dtype=dy.dtype)
    np.put_along_axis(blocks, cache.argmax[:, :, None, :], dy[:, :, None, :], axis=2)
    dx = np.zeros(cache.input_shape, dtype=dy.dtype)
    dx[:, : n_out * cache.window] = blocks.reshape(n_sm, n_out * cache.window, n_feat)
    return dx, {}


@dataclass
class AvgPoolCache:
    input_shape: Tuple[int, ...]


def avgpool_time(x: np.ndarray) -> Tuple[np.ndarray, AvgPoolCache]:
    if x.ndim != 3:
        raise DimensionError(f"avgpool expects (samples, steps, features), got {x.shape}")
    return x.mean(axis=1), AvgPoolCache(x.shape)


def avgpool_backward(cache: AvgPoolCache, dy: np.ndarray) -> Tuple[np.ndarray, Grads]:
    n_sm, n_steps, n_feat = cache.input_shape
    if dy.shape != (n_sm, n_feat):
        raise DimensionError(f"upstream grad {dy.shape} does not match avgpool output {(n_sm, n_feat)}")
    dx = np.broadcast_to(dy[:, None, :] / n_steps, cache.input_shape).copy()
    return dx, {}


# Fully connected ---------------------------------------------------------------


@dataclass
class FcCache:
    x: np.ndarray
    pre: np.ndarray
    params: FcParams
    activation: str


def fc_forward(x: np.ndarray, p: FcParams, activation: str = "identity") -> Tuple[np.ndarray, FcCache]:
    if x.ndim != 2 or x.shape[1] != p.weights.shape[0]:
        raise DimensionError(f"input {x.shape} does not match FC weights {p.weights.shape}")
    f, _ = _activation(activation)
    pre = x @ p.weights + p.bias
    return f(pre), FcCache(x, pre, p, activation)


def fc_backward(cache: FcCache, dy: np.ndarray) -> Tuple[np.ndarray, Grads]:
    if dy.shape != cache.pre.shape:
        raise DimensionError(f"upstream grad {dy.shape} does not match FC output {cache.pre.shape}")
    _, df = _activation(cache.activation)
    dpre = dy * df(cache.pre)
    grads = {"weights": cache.x.T @ dpre, "bias": dpre.sum(axis=0)}
    return dpre @ cache.params.weights.T, grads


_BACKWARD = {
    AttentionCache: attention_backward,
    IndRNNCache: indrnn_backward,
    BatchNormCache: batchnorm_backward,
    MaxPoolCache: maxpool_backward,
    AvgPoolCache: avgpool_backward,
    FcCache: fc_backward,
}


def layer_backward(cache, upstream_grad: np.ndarray) -> Tuple[np.ndarray, Grads]:
    """Dispatch to the backward pass matching the cache's layer type."""
    try:
        backward = _BACKWARD[type(cache)]
    except KeyError:
        raise TypeError(f"no backward pass registered for {type(cache).__name__}") from None
    return backward(cache, upstream_grad)
