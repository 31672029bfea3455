"""Architecture family built from attention, dense IndRNN blocks and pooling.

Four variants share one code path:

* ``ADIndRNN-(B,L)``: attention, then B dense blocks of L IndRNN+BN
  components, each block followed by max pooling.
* ``DIndRNN-(B,L)``: the same without attention.
* ``AIndRNN-k``: attention, then k plain IndRNN layers, each followed by BN
  and max pooling.
* ``IndRNN-k``: the plain stack without attention.

All variants end with temporal average pooling and two fully connected
layers (100 ReLU units, then 2 logits).
"""

from __future__ import annotations

import copy
import json
import re
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np

from .layers import (
    ACTIVATIONS,
    AttentionParams,
    BatchNormParams,
    FcParams,
    IndRNNParams,
    attention_backward,
    attention_forward,
    avgpool_backward,
    avgpool_time,
    batchnorm_apply,
    batchnorm_backward,
    fc_backward,
    fc_forward,
    indrnn_backward,
    indrnn_forward,
    maxpool_backward,
    maxpool_time,
    update_running_stats,
)
from .tensor import DimensionError

__all__ = [
    "BlockSpec",
    "ModelSpec",
    "ModelParams",
    "ModelCache",
    "build_model",
    "dense_block_forward",
    "dense_block_backward",
    "model_forward",
    "model_backward",
    "extract_attention_weights",
    "save_checkpoint",
    "load_checkpoint",
    "CHECKPOINT_VERSION",
]

CHECKPOINT_VERSION = 1
DEFAULT_STATE_SIZES = (80, 120, 160)
_STATE_STEP = 40


@dataclass
class BlockSpec:
    n_layers: int
    state_size: int


def _default_state_sizes(n_blocks: int) -> List[int]:
    sizes = list(DEFAULT_STATE_SIZES[:n_blocks])
    while len(sizes) < n_blocks:
        sizes.append(sizes[-1] + _STATE_STEP)
    return sizes


@dataclass
class ModelSpec:
    """Declarative description of one network.

    For the non-dense variants ``blocks`` only groups layers by state size;
    every layer gets its own BN and pooling stage.
    """

    n_channels: int
    blocks: List[BlockSpec]
    dense: bool = True
    use_attention: bool = True
    fc_sizes: Tuple[int, ...] = (100, 2)
    pool_window: int = 2
    pool_stride: int = 2
    act_hidden: str = "relu"
    act_out: str = "relu"
    fc_activation: str = "relu"
    attention_init_std: float = 0.1
    fc_bias_init: float = 0.001
    recurrent_init: Tuple[float, float] = (0.0, 1.0)
    recurrent_clip: Optional[float] = None
    bn_epsilon: float = 1e-5
    bn_momentum: float = 0.9
    n_steps: Optional[int] = None
    dtype: str = "float64"

    def __post_init__(self):
        self.blocks = [b if isinstance(b, BlockSpec) else BlockSpec(**b) for b in self.blocks]
        self.fc_sizes = tuple(int(s) for s in self.fc_sizes)
        self.recurrent_init = tuple(float(v) for v in self.recurrent_init)
        self.validate()

    @property
    def variant(self) -> str:
        return {
            (True, True): "adindrnn",
            (True, False): "dindrnn",
            (False, True): "aindrnn",
            (False, False): "indrnn",
        }[(self.dense, self.use_attention)]

    @property
    def name(self) -> str:
        if self.dense:
            prefix = "ADIndRNN" if self.use_attention else "DIndRNN"
            layers = {b.n_layers for b in self.blocks}
            per_block = layers.pop() if len(layers) == 1 else "x"
            return f"{prefix}-({len(self.blocks)},{per_block})"
        prefix = "AIndRNN" if self.use_attention else "IndRNN"
        return f"{prefix}-{self.n_pools}"

    @property
    def n_pools(self) -> int:
        if self.dense:
            return len(self.blocks)
        return sum(b.n_layers for b in self.blocks)

    def validate(self) -> None:
        if self.n_channels < 1:
            raise ValueError("n_channels must be positive")
        if not self.blocks:
            raise ValueError("at least one block is required")
        for b in self.blocks:
            if b.n_layers < 1 or b.state_size < 1:
                raise ValueError(f"invalid block {b}")
        if not self.fc_sizes or any(s < 1 for s in self.fc_sizes):
            raise ValueError("fc_sizes must be a nonempty list of positive sizes")
        if self.fc_sizes[-1] != 2:
            raise ValueError("the final FC layer must have 2 outputs (seizure / nonseizure)")
        if self.pool_window < 1 or self.pool_stride != self.pool_window:
            raise ValueError("pooling must be non-overlapping with a positive window")
        for act in (self.act_hidden, self.act_out, self.fc_activation):
            if act not in ACTIVATIONS:
                raise ValueError(f"unknown activation {act!r}")
        if self.dtype not in ("float64", "float32"):
            raise ValueError("dtype must be float64 or float32")
        if self.n_steps is not None:
            steps = self.n_steps
            for i in range(self.n_pools):
                if steps < self.pool_window:
                    raise ValueError(
                        f"{self.name} needs {self.n_pools} poolings but a {self.n_steps}-step input "
                        f"is exhausted after {i}"
                    )
                steps //= self.pool_window

    @classmethod
    def from_name(
        cls,
        name: str,
        n_channels: int,
        state_sizes: Optional[Sequence[int]] = None,
        **kwargs,
    ) -> "ModelSpec":
        """Build a spec from names like ``ADIndRNN-(3,3)`` or ``IndRNN-12``.

        Plain stacks are grouped three layers per state size (80, 120, 160,
        then +40 per further group) unless ``state_sizes`` gives one size
        per layer.
        """
        compact = name.replace(" ", "")
        m = re.fullmatch(r"(A?)DIndRNN-\((\d+),(\d+)\)", compact, flags=re.IGNORECASE)
        if m:
            n_blocks, per_block = int(m.group(2)), int(m.group(3))
            sizes = list(state_sizes) if state_sizes is not None else _default_state_sizes(n_blocks)
            if len(sizes) != n_blocks:
                raise ValueError(f"{name} needs {n_blocks} state sizes, got {len(sizes)}")
            blocks = [BlockSpec(per_block, s) for s in sizes]
            return cls(n_channels=n_channels, blocks=blocks, dense=True, use_attention=bool(m.group(1)), **kwargs)
        m = re.fullmatch(r"(A?)IndRNN-(\d+)", compact, flags=re.IGNORECASE)
        if m:
            n_layers = int(m.group(2))
            if state_sizes is not None:
                if len(state_sizes) != n_layers:
                    raise ValueError(f"{name} needs {n_layers} state sizes, got {len(state_sizes)}")
                blocks = [BlockSpec(1, s) for s in state_sizes]
            else:
                n_groups = -(-n_layers // 3)
                sizes = _default_state_sizes(n_groups)
                blocks = [BlockSpec(min(3, n_layers - 3 * g), sizes[g]) for g in range(n_groups)]
            return cls(n_channels=n_channels, blocks=blocks, dense=False, use_attention=bool(m.group(1)), **kwargs)
        raise ValueError(f"unrecognised model name {name!r}")

    def to_dict(self) -> dict:
        d = asdict(self)
        d["fc_sizes"] = list(self.fc_sizes)
        d["recurrent_init"] = list(self.recurrent_init)
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "ModelSpec":
        return cls(**d)


@dataclass
class ModelParams:
    spec: ModelSpec
    attention: Optional[AttentionParams]
    indrnn: List[List[IndRNNParams]]
    batchnorm: List[List[BatchNormParams]]
    fc: List[FcParams]

    def named_parameters(self) -> Dict[str, np.ndarray]:
        """Trainable tensors by name. The arrays are the live parameters."""
        out = {}
        if self.attention is not None:
            out["attention.kernel"] = self.attention.kernel
            out["attention.bias"] = self.attention.bias
        for b, (rnns, bns) in enumerate(zip(self.indrnn, self.batchnorm)):
            for i, (rnn, bn) in enumerate(zip(rnns, bns)):
                prefix = f"blocks.{b}.{i}"
                for fname in ("input_weights", "recurrent_weights", "hidden_bias", "output_weights", "output_bias"):
                    out[f"{prefix}.indrnn.{fname}"] = getattr(rnn, fname)
                out[f"{prefix}.bn.gamma"] = bn.gamma
                out[f"{prefix}.bn.beta"] = bn.beta
        for k, fc in enumerate(self.fc):
            out[f"fc.{k}.weights"] = fc.weights
            out[f"fc.{k}.bias"] = fc.bias
        return out

    def named_buffers(self) -> Dict[str, np.ndarray]:
        """Non-trainable state (BN running statistics)."""
        out = {}
        for b, bns in enumerate(self.batchnorm):
            for i, bn in enumerate(bns):
                out[f"blocks.{b}.{i}.bn.running_mean"] = bn.running_mean
                out[f"blocks.{b}.{i}.bn.running_var"] = bn.running_var
        return out

    def _owner(self, name: str):
        parts = name.split(".")
        if parts[0] == "attention":
            return self.attention, parts[1]
        if parts[0] == "fc":
            return self.fc[int(parts[1])], parts[2]
        b, i, kind, fname = int(parts[1]), int(parts[2]), parts[3], parts[4]
        owner = self.indrnn[b][i] if kind == "indrnn" else self.batchnorm[b][i]
        return owner, fname

    def set_tensor(self, name: str, value: np.ndarray) -> None:
        owner, fname = self._owner(name)
        current = getattr(owner, fname)
        if current.shape != value.shape:
            raise DimensionError(f"{name}: expected shape {current.shape}, got {value.shape}")
        setattr(owner, fname, np.array(value, dtype=current.dtype))

    def copy(self) -> "ModelParams":
        return copy.deepcopy(self)

    def clip_recurrent(self, bound: float) -> None:
        for rnns in self.indrnn:
            for rnn in rnns:
                np.clip(rnn.recurrent_weights, -bound, bound, out=rnn.recurrent_weights)


def _truncated_normal(rng: np.random.Generator, std: float, shape, dtype) -> np.ndarray:
    # resample anything beyond two standard deviations
    values = rng.normal(0.0, std, size=shape)
    bad = np.abs(values) > 2 * std
    while bad.any():
        values[bad] = rng.normal(0.0, std, size=int(bad.sum()))
        bad = np.abs(values) > 2 * std
    return values.astype(dtype)


def _xavier_uniform(rng: np.random.Generator, fan_in: int, fan_out: int, dtype) -> np.ndarray:
    limit = np.sqrt(6.0 / (fan_in + fan_out))
    return rng.uniform(-limit, limit, size=(fan_in, fan_out)).astype(dtype)


def _component_input_widths(spec: ModelSpec) -> List[List[int]]:
    width = spec.n_channels
    widths = []
    for block in spec.blocks:
        block_widths = []
        if spec.dense:
            for i in range(block.n_layers):
                block_widths.append(width + i * block.state_size)
        else:
            for i in range(block.n_layers):
                block_widths.append(width if i == 0 else block.state_size)
        widths.append(block_widths)
        width = block.state_size
    return widths


def build_model(spec: ModelSpec, rng_seed: int = 0) -> ModelParams:
    """Initialise parameters for ``spec``; the same seed gives identical arrays."""
    spec.validate()
    rng = np.random.default_rng(rng_seed)
    dtype = np.dtype(spec.dtype)
    n_ch = spec.n_channels

    attention = None
    if spec.use_attention:
        attention = AttentionParams(
            kernel=_truncated_normal(rng, spec.attention_init_std, (n_ch, n_ch), dtype),
            bias=np.zeros(n_ch, dtype=dtype),
        )

    lo, hi = spec.recurrent_init
    indrnn, batchnorm = [], []
    for block, widths in zip(spec.blocks, _component_input_widths(spec)):
        h = block.state_size
        rnns, bns = [], []
        for width in widths:
            rnns.append(
                IndRNNParams(
                    input_weights=_xavier_uniform(rng, width, h, dtype),
                    recurrent_weights=rng.uniform(lo, hi, size=h).astype(dtype),
                    hidden_bias=np.zeros(h, dtype=dtype),
                    output_weights=_xavier_uniform(rng, h, h, dtype),
                    output_bias=np.zeros(h, dtype=dtype),
                )
            )
            bns.append(BatchNormParams.create(h, dtype=dtype, epsilon=spec.bn_epsilon, momentum=spec.bn_momentum))
        indrnn.append(rnns)
        batchnorm.append(bns)

    fc = []
    width = spec.blocks[-1].state_size
    for size in spec.fc_sizes:
        fc.append(
            FcParams(
                weights=_xavier_uniform(rng, width, size, dtype),
                bias=np.full(size, spec.fc_bias_init, dtype=dtype),
            )
        )
        width = size
    return ModelParams(spec=spec, attention=attention, indrnn=indrnn, batchnorm=batchnorm, fc=fc)


# Dense block -------------------------------------------------------------------


@dataclass
class DenseBlockCache:
    components: list  # (indrnn cache, bn cache) per component
    input_width: int
    output_widths: List[int]
    dense: bool


def dense_block_forward(
    x: np.ndarray,
    rnns: Sequence[IndRNNParams],
    bns: Sequence[BatchNormParams],
    mode: str = "train",
    act_hidden: str = "relu",
    act_out: str = "relu",
    dense: bool = True,
    update_stats: bool = True,
    keep_cache: bool = True,
) -> Tuple[np.ndarray, DenseBlockCache]:
    """Run a block of IndRNN+BN components.

    With ``dense=True`` component *i* consumes the feature-axis concatenation
    of the block input and the outputs of components ``1..i-1``; the block
    returns the last component's output. ``dense=False`` severs those links
    and chains the components sequentially. ``keep_cache=False`` drops the
    per-component caches as soon as possible (inference only).
    """
    if len(rnns) < 1 or len(rnns) != len(bns):
        raise ValueError("a block needs at least one component and matching BN layers")
    if x.ndim != 3:
        raise DimensionError(f"dense block expects (samples, steps, features), got {x.shape}")
    outputs = []
    components = []
    for rnn, bn in zip(rnns, bns):
        if dense and outputs:
            inp = np.concatenate([x] + outputs, axis=2)
        elif outputs:
            inp = outputs[-1]
        else:
            inp = x
        h, rnn_cache = indrnn_forward(inp, rnn, act_hidden, act_out)
        y, bn_cache = batchnorm_apply(h, bn, mode)
        if update_stats:
            update_running_stats(bn, bn_cache)
        outputs.append(y)
        if keep_cache:
            components.append((rnn_cache, bn_cache))
        del rnn_cache, bn_cache, h, inp
    cache = DenseBlockCache(components, x.shape[2], [o.shape[2] for o in outputs], dense)
    return outputs[-1], cache


def dense_block_backward(cache: DenseBlockCache, dy: np.ndarray) -> Tuple[np.ndarray, List[Tuple[dict, dict]]]:
    """Returns ``(dx, [(indrnn_grads, bn_grads), ...])`` in component order."""
    n = len(cache.components)
    d_outputs: List[Optional[np.ndarray]] = [None] * n
    d_outputs[-1] = dy
    dx = np.zeros(dy.shape[:2] + (cache.input_width,), dtype=dy.dtype)
    grads: List[Optional[Tuple[dict, dict]]] = [None] * n
    for i in range(n - 1, -1, -1):
        rnn_cache, bn_cache = cache.components[i]
        d_out = d_outputs[i]
        if d_out is None:
            d_out = np.zeros(dy.shape[:2] + (cache.output_widths[i],), dtype=dy.dtype)
        dh, bn_grads = batchnorm_backward(bn_cache, d_out)
        d_in, rnn_grads = indrnn_backward(rnn_cache, dh)
        grads[i] = (rnn_grads, bn_grads)
        if i == 0:
            dx += d_in
        elif cache.dense:
            dx += d_in[:, :, : cache.input_width]
            offset = cache.input_width
            for j in range(i):
                width = cache.output_widths[j]
                piece = d_in[:, :, offset : offset + width]
                d_outputs[j] = piece if d_outputs[j] is None else d_outputs[j] + piece
                offset += width
        else:
            prev = d_outputs[i - 1]
            d_outputs[i - 1] = d_in if prev is None else prev + d_in
    return dx, grads


# Whole model -------------------------------------------------------------------


@dataclass
class ModelCache:
    shapes: List[Tuple[int, ...]] = field(default_factory=list)
    attention: object = None
    stages: list = field(default_factory=list)  # ("dense"|"plain", block, cache, pool cache)
    avgpool: object = None
    fc: list = field(default_factory=list)


def model_forward(
    params: ModelParams,
    x: np.ndarray,
    mode: str = "infer",
    keep_cache: bool = True,
    update_stats: bool = True,
) -> Tuple[np.ndarray, Optional[np.ndarray], ModelCache]:
    """Run the network on ``x`` of shape ``(n_sm, n_sp, n_ch)``.

    Returns ``(logits, attention_weights, cache)``. ``cache.shapes`` records
    the tensor shape after attention, each pooling stage, average pooling
    and each FC layer. In ``"train"`` mode BN running statistics are updated
    unless ``update_stats`` is false.
    """
    spec = params.spec
    x = np.asarray(x, dtype=spec.dtype)
    if x.ndim != 3:
        raise DimensionError(f"model expects (samples, steps, channels), got {x.shape}")
    if x.shape[2] != spec.n_channels:
        raise DimensionError(f"model built for {spec.n_channels} channels, input has {x.shape[2]}")
    cache = ModelCache()
    cache.shapes.append(x.shape)
    attn_weights = None
    h = x
    if params.attention is not None:
        h, attn_weights, attn_cache = attention_forward(h, params.attention)
        cache.attention = attn_cache if keep_cache else None

    for b, (rnns, bns) in enumerate(zip(params.indrnn, params.batchnorm)):
        if spec.dense:
            h, block_cache = dense_block_forward(
                h, rnns, bns, mode, spec.act_hidden, spec.act_out, dense=True, update_stats=update_stats,
                keep_cache=keep_cache,
            )
            h, pool_cache = maxpool_time(h, spec.pool_window, spec.pool_stride)
            cache.shapes.append(h.shape)
            if keep_cache:
                cache.stages.append(("dense", b, block_cache, pool_cache))
        else:
            for i, (rnn, bn) in enumerate(zip(rnns, bns)):
                h, block_cache = dense_block_forward(
                    h, [rnn], [bn], mode, spec.act_hidden, spec.act_out, dense=False, update_stats=update_stats,
                    keep_cache=keep_cache,
                )
                h, pool_cache = maxpool_time(h, spec.pool_window, spec.pool_stride)
                cache.shapes.append(h.shape)
                if keep_cache:
                    cache.stages.append(("plain", (b, i), block_cache, pool_cache))

    h, avg_cache = avgpool_time(h)
    cache.shapes.append(h.shape)
    if keep_cache:
        cache.avgpool = avg_cache
    last = len(params.fc) - 1
    for k, fc in enumerate(params.fc):
        h, fc_cache = fc_forward(h, fc, "identity" if k == last else spec.fc_activation)
        cache.shapes.append(h.shape)
        if keep_cache:
            cache.fc.append(fc_cache)
    return h, attn_weights, cache


def model_backward(params: ModelParams, cache: ModelCache, dlogits: np.ndarray) -> Dict[str, np.ndarray]:
    """Gradients of every named parameter given the gradient w.r.t. the logits."""
    if cache.avgpool is None:
        raise ValueError("forward pass was run without keep_cache=True")
    grads: Dict[str, np.ndarray] = {}
    d = dlogits
    for k in range(len(cache.fc) - 1, -1, -1):
        d, g = fc_backward(cache.fc[k], d)
        grads[f"fc.{k}.weights"] = g["weights"]
        grads[f"fc.{k}.bias"] = g["bias"]
    d, _ = avgpool_backward(cache.avgpool, d)
    for kind, where, block_cache, pool_cache in reversed(cache.stages):
        d, _ = maxpool_backward(pool_cache, d)
        d, comp_grads = dense_block_backward(block_cache, d)
        if kind == "dense":
            b, offset = where, 0
        else:
            b, offset = where
        for i, (rnn_g, bn_g) in enumerate(comp_grads):
            prefix = f"blocks.{b}.{offset + i}"
            for name, value in rnn_g.items():
                grads[f"{prefix}.indrnn.{name}"] = value
            grads[f"{prefix}.bn.gamma"] = bn_g["gamma"]
            grads[f"{prefix}.bn.beta"] = bn_g["beta"]
    if cache.attention is not None:
        _, g = attention_backward(cache.attention, d)
        grads["attention.kernel"] = g["kernel"]
        grads["attention.bias"] = g["bias"]
    return grads


def extract_attention_weights(params: ModelParams, x: np.ndarray) -> np.ndarray:
    """Per-sample channel weights produced by the attention layer."""
    spec = params.spec
    if params.attention is None:
        raise ValueError(f"{spec.name} has no attention layer")
    x = np.asarray(x, dtype=spec.dtype)
    if x.ndim != 3 or x.shape[2] != spec.n_channels:
        raise DimensionError(f"expected (samples, steps, {spec.n_channels}), got {x.shape}")
    _, weights, _ = attention_forward(x, params.attention)
    return weights


# Checkpoints -------------------------------------------------------------------


def save_checkpoint(path, params: ModelParams) -> Path:
    """Write ``manifest.json`` and ``params.bin`` into directory ``path``.

    The blob is the concatenation of little-endian arrays in manifest order.
    """
    spec = params.spec
    path = Path(path)
    path.mkdir(parents=True, exist_ok=True)
    dtype = np.dtype(spec.dtype).newbyteorder("<")
    entries = []
    offset = 0
    with open(path / "params.bin", "wb") as fh:
        for kind, tensors in (("parameter", params.named_parameters()), ("buffer", params.named_buffers())):
            for name, value in tensors.items():
                raw = np.ascontiguousarray(value, dtype=dtype).tobytes()
                entries.append(
                    {"name": name, "kind": kind, "shape": list(value.shape), "offset": offset, "nbytes": len(raw)}
                )
                fh.write(raw)
                offset += len(raw)
    manifest = {
        "format_version": CHECKPOINT_VERSION,
        "dtype": dtype.str,
        "spec": spec.to_dict(),
        "tensors": entries,
    }
    (path / "manifest.json").write_text(json.dumps(manifest, indent=2, sort_keys=True))
    return path


def load_checkpoint(path) -> ModelParams:
    path = Path(path)
    manifest = json.loads((path / "manifest.json").read_text())
    version = manifest.get("format_version")
    if version != CHECKPOINT_VERSION:
        raise ValueError(f"unsupported checkpoint version {version!r}")
    spec = ModelSpec.from_dict(manifest["spec"])
    params = build_model(spec, rng_seed=0)
    blob = (path / "params.bin").read_bytes()
    dtype = np.dtype(manifest["dtype"])
    expected = set(params.named_parameters()) | set(params.named_buffers())
    seen = set()
    for entry in manifest["tensors"]:
        raw = blob[entry["offset"] : entry["offset"] + entry["nbytes"]]
        value = np.frombuffer(raw, dtype=dtype).reshape(entry["shape"])
        params.set_tensor(entry["name"], value)
        seen.add(entry["name"])
    if seen != expected:
        raise ValueError(f"checkpoint tensors do not match the model spec: missing {sorted(expected - seen)}")
    return params
