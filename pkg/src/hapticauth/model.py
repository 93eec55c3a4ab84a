"""Two-layer transformer encoder classifier over 13-channel feature sequences.

Post-norm encoder layers (LayerNorm(x + Sublayer(x))), fixed sinusoidal
positional encodings, mean-pooling over time, and a linear head.  Parameters
live in a named-tensor map so the optimizer, checkpoints, and gradient
checks all see one flat, deterministically ordered view.
"""

from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass
from pathlib import Path
from typing import Iterator

import numpy as np

from . import autodiff as ad
from .autodiff import Tensor, _make
from .errors import ConfigError, DataError, ShapeError

CHECKPOINT_VERSION = 1
PAPER_SEQ_LENS = (64, 512)


@dataclass(frozen=True)
class ModelConfig:
    input_channels: int = 13
    d_model: int = 256
    num_heads: int = 16
    ffn_dim: int = 256
    num_layers: int = 2
    num_classes: int = 2
    seq_len: int = 64
    dropout: float = 0.0

    def __post_init__(self):
        if self.d_model < 1 or self.num_heads < 1 or self.ffn_dim < 1:
            raise ConfigError(f"model dims must be positive: {self}")
        if self.d_model % self.num_heads != 0:
            raise ConfigError(
                f"d_model ({self.d_model}) must be divisible by num_heads ({self.num_heads})"
            )
        if self.d_model % 2 != 0:
            raise ConfigError(f"d_model must be even for sinusoidal encodings, got {self.d_model}")
        if self.num_layers < 1:
            raise ConfigError(f"num_layers must be >= 1, got {self.num_layers}")
        if self.num_classes < 2:
            raise ConfigError(f"num_classes must be >= 2, got {self.num_classes}")
        if self.seq_len < 1 or self.input_channels < 1:
            raise ConfigError(f"seq_len and input_channels must be positive: {self}")
        if not (0.0 <= self.dropout < 1.0):
            raise ConfigError(f"dropout must be in [0, 1), got {self.dropout}")

    @property
    def head_dim(self) -> int:
        return self.d_model // self.num_heads

    @property
    def paper_standard(self) -> bool:
        return self.seq_len in PAPER_SEQ_LENS

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, doc: dict) -> "ModelConfig":
        return cls(**doc)


class ModelParams:
    """Named tensors in a fixed order; the non-trainable positional table is
    carried alongside the learned weights."""

    def __init__(self, config: ModelConfig, tensors: dict[str, Tensor]):
        self.config = config
        self._tensors = dict(tensors)

    def __getitem__(self, name: str) -> Tensor:
        return self._tensors[name]

    def __contains__(self, name: str) -> bool:
        return name in self._tensors

    def names(self) -> list[str]:
        return list(self._tensors)

    def items(self) -> Iterator[tuple[str, Tensor]]:
        return iter(self._tensors.items())

    def trainable(self) -> dict[str, Tensor]:
        return {k: t for k, t in self._tensors.items() if t.requires_grad}

    def num_trainable(self) -> int:
        return sum(t.data.size for t in self._tensors.values() if t.requires_grad)

    def astype(self, dtype) -> "ModelParams":
        return ModelParams(self.config, {k: t.astype(dtype) for k, t in self._tensors.items()})

    def zero_grads(self) -> None:
        for t in self._tensors.values():
            t.zero_grad()


def positional_encoding(length: int, d_model: int, dtype=np.float32) -> np.ndarray:
    """Sinusoidal table: PE[p, 2i] = sin(p / 10000^(2i/d)), PE[p, 2i+1] = cos(...)."""
    if length < 1 or d_model < 1:
        raise ConfigError(f"positional encoding needs positive dims, got ({length}, {d_model})")
    if d_model % 2 != 0:
        raise ConfigError(f"positional encoding needs an even dimension, got {d_model}")
    pos = np.arange(length, dtype=np.float64)[:, None]
    i2 = np.arange(0, d_model, 2, dtype=np.float64)[None, :]
    angle = pos / np.power(10000.0, i2 / d_model)
    table = np.empty((length, d_model), dtype=dtype)
    table[:, 0::2] = np.sin(angle)
    table[:, 1::2] = np.cos(angle)
    return table


def build_model(cfg: ModelConfig, seed: int) -> ModelParams:
    """Deterministic init: weights ~ U(-1/sqrt(fan_in), 1/sqrt(fan_in)),
    biases zero, layer-norm gamma 1 / beta 0."""
    rng = np.random.default_rng(seed)

    def linear_weight(fan_in: int, fan_out: int) -> Tensor:
        bound = 1.0 / math.sqrt(fan_in)
        w = rng.uniform(-bound, bound, size=(fan_in, fan_out)).astype(np.float32)
        return Tensor(w, requires_grad=True)

    def zeros(*shape: int) -> Tensor:
        return Tensor(np.zeros(shape, dtype=np.float32), requires_grad=True)

    def ones(*shape: int) -> Tensor:
        return Tensor(np.ones(shape, dtype=np.float32), requires_grad=True)

    d, ffn = cfg.d_model, cfg.ffn_dim
    tensors: dict[str, Tensor] = {}
    tensors["in_proj.w"] = linear_weight(cfg.input_channels, d)
    tensors["in_proj.b"] = zeros(d)
    tensors["pos.table"] = Tensor(positional_encoding(cfg.seq_len, d), requires_grad=False)
    for i in range(cfg.num_layers):
        p = f"layers.{i}"
        tensors[f"{p}.attn.wq"] = linear_weight(d, d)
        tensors[f"{p}.attn.wk"] = linear_weight(d, d)
        tensors[f"{p}.attn.wv"] = linear_weight(d, d)
        tensors[f"{p}.attn.wo"] = linear_weight(d, d)
        tensors[f"{p}.ln1.gamma"] = ones(d)
        tensors[f"{p}.ln1.beta"] = zeros(d)
        tensors[f"{p}.ffn.w1"] = linear_weight(d, ffn)
        tensors[f"{p}.ffn.b1"] = zeros(ffn)
        tensors[f"{p}.ffn.w2"] = linear_weight(ffn, d)
        tensors[f"{p}.ffn.b2"] = zeros(d)
        tensors[f"{p}.ln2.gamma"] = ones(d)
        tensors[f"{p}.ln2.beta"] = zeros(d)
    tensors["head.w"] = linear_weight(d, cfg.num_classes)
    tensors["head.b"] = zeros(cfg.num_classes)
    return ModelParams(cfg, tensors)


def mhsa(x: Tensor, wq: Tensor, wk: Tensor, wv: Tensor, wo: Tensor,
         num_heads: int) -> Tensor:
    """Full bidirectional multi-head self-attention with 1/sqrt(head_dim)
    scaling; heads concatenated then output-projected."""
    if x.data.ndim != 3:
        raise ShapeError(f"mhsa expects (B, L, d) input, got {x.shape}")
    bsz, length, d = x.shape
    if d % num_heads != 0:
        raise ShapeError(f"model dim {d} not divisible by {num_heads} heads")
    head_dim = d // num_heads

    def split_heads(t: Tensor) -> Tensor:
        t = ad.reshape(t, (bsz, length, num_heads, head_dim))
        return ad.transpose(t, (0, 2, 1, 3))  # (B, h, L, dh)

    q = split_heads(ad.matmul(x, wq))
    k = split_heads(ad.matmul(x, wk))
    v = split_heads(ad.matmul(x, wv))

    scores = ad.mul_scalar(ad.matmul(q, ad.transpose(k, (0, 1, 3, 2))), 1.0 / math.sqrt(head_dim))
    attn = ad.softmax(scores, axis=-1)
    ctx = ad.matmul(attn, v)                       # (B, h, L, dh)
    ctx = ad.transpose(ctx, (0, 2, 1, 3))          # (B, L, h, dh)
    ctx = ad.reshape(ctx, (bsz, length, d))
    return ad.matmul(ctx, wo)


def _dropout(x: Tensor, p: float, rng: np.random.Generator | None) -> Tensor:
    if p <= 0.0 or rng is None:
        return x
    keep = (rng.random(x.shape) >= p).astype(x.data.dtype) / x.data.dtype.type(1.0 - p)
    return ad.mul(x, Tensor(keep, dtype=x.data.dtype))


def forward(params: ModelParams, batch: np.ndarray, *, positional: bool = True,
            dropout_rng: np.random.Generator | None = None,
            ffn_preacts: list[np.ndarray] | None = None) -> Tensor:
    """Run the encoder classifier; returns (B, num_classes) logits.

    Pass a list as ffn_preacts to collect every FFN pre-activation array
    (used to keep gradient-check inputs away from the ReLU kink).
    """
    cfg = params.config
    x_in = np.asarray(batch)
    if x_in.ndim != 3 or x_in.shape[2] != cfg.input_channels:
        raise ShapeError(
            f"batch shape {x_in.shape} does not match (B, L, {cfg.input_channels})"
        )
    if positional and x_in.shape[1] != cfg.seq_len:
        raise ShapeError(f"batch length {x_in.shape[1]} != configured seq_len {cfg.seq_len}")
    dtype = params["in_proj.w"].data.dtype
    x = Tensor(x_in, dtype=dtype)

    x = ad.add(ad.matmul(x, params["in_proj.w"]), params["in_proj.b"])
    if positional:
        x = ad.add(x, params["pos.table"])
    for i in range(cfg.num_layers):
        p = f"layers.{i}"
        attn_out = mhsa(x, params[f"{p}.attn.wq"], params[f"{p}.attn.wk"],
                        params[f"{p}.attn.wv"], params[f"{p}.attn.wo"], cfg.num_heads)
        attn_out = _dropout(attn_out, cfg.dropout, dropout_rng)
        x = ad.layer_norm(ad.add(x, attn_out), params[f"{p}.ln1.gamma"], params[f"{p}.ln1.beta"])
        pre = ad.add(ad.matmul(x, params[f"{p}.ffn.w1"]), params[f"{p}.ffn.b1"])
        if ffn_preacts is not None:
            ffn_preacts.append(pre.data)
        hidden = ad.relu(pre)
        ffn_out = ad.add(ad.matmul(hidden, params[f"{p}.ffn.w2"]), params[f"{p}.ffn.b2"])
        ffn_out = _dropout(ffn_out, cfg.dropout, dropout_rng)
        x = ad.layer_norm(ad.add(x, ffn_out), params[f"{p}.ln2.gamma"], params[f"{p}.ln2.beta"])
    pooled = ad.mean(x, axis=1)
    return ad.add(ad.matmul(pooled, params["head.w"]), params["head.b"])


def draw_kink_free_batch(params: ModelParams, batch_size: int, seed: int = 0,
                         margin: float = 2e-4, max_tries: int = 500
                         ) -> tuple[np.ndarray, np.ndarray]:
    """Random batch + labels whose FFN pre-activations all stay at least
    `margin` away from zero, so central differences never cross a ReLU kink."""
    cfg = params.config
    for attempt in range(max_tries):
        rng = np.random.default_rng([seed, attempt])
        batch = rng.standard_normal((batch_size, cfg.seq_len, cfg.input_channels))
        labels = rng.integers(0, cfg.num_classes, size=batch_size)
        preacts: list[np.ndarray] = []
        forward(params, batch.astype(params["in_proj.w"].data.dtype), ffn_preacts=preacts)
        if min(np.abs(p).min() for p in preacts) > margin:
            return batch, labels
    raise DataError(f"no kink-free batch found in {max_tries} tries (margin {margin})")


def cross_entropy(logits: Tensor, labels: np.ndarray) -> Tensor:
    """Mean negative log-likelihood over the batch, computed via log-sum-exp."""
    y = np.asarray(labels)
    if logits.data.ndim != 2:
        raise ShapeError(f"cross_entropy expects (B, K) logits, got {logits.shape}")
    bsz, k = logits.shape
    if y.shape != (bsz,):
        raise ShapeError(f"labels shape {y.shape} does not match batch size {bsz}")
    if y.size and (y.min() < 0 or y.max() >= k):
        raise DataError(f"labels must lie in [0, {k}), got range [{y.min()}, {y.max()}]")

    z = logits.data
    zmax = z.max(axis=1, keepdims=True)
    lse = zmax[:, 0] + np.log(np.exp(z - zmax).sum(axis=1))
    picked = z[np.arange(bsz), y]
    loss_val = np.asarray((lse - picked).mean(), dtype=z.dtype)

    probs = np.exp(z - zmax)
    probs /= probs.sum(axis=1, keepdims=True)

    def backward_fn(g):
        dz = probs.copy()
        dz[np.arange(bsz), y] -= 1.0
        ad._accumulate(logits, dz * (g / bsz))

    return _make(loss_val, (logits,), backward_fn)


# --- checkpoints -------------------------------------------------------------

def save_checkpoint(path: Path | str, params: ModelParams,
                    meta: dict | None = None,
                    extras: dict[str, np.ndarray] | None = None) -> None:
    """JSON header line (version, config, tensor names/shapes, meta) followed
    by each tensor's raw little-endian float32 values in header order."""
    extras = extras or {}
    names = params.names() + sorted(extras)
    arrays = {name: params[name].data for name in params.names()}
    arrays.update({k: np.asarray(v, dtype=np.float32) for k, v in extras.items()})
    header = {
        "format_version": CHECKPOINT_VERSION,
        "config": params.config.to_dict(),
        "tensors": [[name, list(arrays[name].shape)] for name in names],
        "meta": meta or {},
    }
    blob = json.dumps(header, sort_keys=True, separators=(",", ":")).encode("utf-8") + b"\n"
    with open(path, "wb") as fh:
        fh.write(blob)
        for name in names:
            fh.write(np.ascontiguousarray(arrays[name], dtype="<f4").tobytes())


def load_checkpoint(path: Path | str) -> tuple[ModelParams, dict, dict[str, np.ndarray]]:
    """Read a checkpoint; validates every tensor shape against the header and
    the model shapes implied by the stored config."""
    p = Path(path)
    if not p.exists():
        raise DataError(f"checkpoint not found: {p}")
    raw = p.read_bytes()
    nl = raw.find(b"\n")
    if nl < 0:
        raise DataError(f"checkpoint {p} has no header line")
    try:
        header = json.loads(raw[:nl].decode("utf-8"))
        cfg = ModelConfig.from_dict(header["config"])
        tensor_list = [(str(n), tuple(int(x) for x in s)) for n, s in header["tensors"]]
        version = int(header["format_version"])
    except (KeyError, TypeError, ValueError, json.JSONDecodeError) as exc:
        raise DataError(f"invalid checkpoint header in {p}: {exc}") from None
    if version != CHECKPOINT_VERSION:
        raise DataError(f"unsupported checkpoint version {version} in {p}")

    offset = nl + 1
    arrays: dict[str, np.ndarray] = {}
    for name, shape in tensor_list:
        count = int(np.prod(shape)) if shape else 1
        end = offset + 4 * count
        if end > len(raw):
            raise DataError(f"checkpoint {p} truncated at tensor {name!r}")
        arrays[name] = np.frombuffer(raw[offset:end], dtype="<f4").reshape(shape).copy()
        offset = end
    if offset != len(raw):
        raise DataError(f"checkpoint {p} has {len(raw) - offset} trailing bytes")

    reference = build_model(cfg, seed=0)
    tensors: dict[str, Tensor] = {}
    extras: dict[str, np.ndarray] = {}
    for name, arr in arrays.items():
        if name in reference:
            expected = reference[name].data.shape
            if arr.shape != expected:
                raise DataError(
                    f"checkpoint tensor {name!r} has shape {arr.shape}, expected {expected}"
                )
            tensors[name] = Tensor(arr, requires_grad=reference[name].requires_grad)
        else:
            extras[name] = arr
    missing = [n for n in reference.names() if n not in tensors]
    if missing:
        raise DataError(f"checkpoint {p} missing tensors: {missing}")
    ordered = {name: tensors[name] for name in reference.names()}
    return ModelParams(cfg, ordered), dict(header.get("meta", {})), extras
