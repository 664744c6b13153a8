"""Attention, transformer blocks, and the named-parameter store.

The attention entry point below is the single scaled-dot-product used
everywhere: the graph-to-latent cross-attention, the latent self-attention
stack, and the per-node decoder all call it. Every call increments a global
score counter by the number of (query, key) pairs it evaluates, which lets
tests account for compute exactly.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from . import tensor as T
from .errors import DataError, InvalidValueError, ShapeError
from .tensor import Tensor


class ScoreCounter:
    """Counts attention (query, key) pair evaluations, independent of heads."""

    def __init__(self):
        self.count = 0

    def reset(self):
        self.count = 0

    def add(self, n: int):
        self.count += int(n)


score_counter = ScoreCounter()


# -- parameter store ---------------------------------------------------------


class ParamStore:
    """Named parameter tensors with a group tag and a trainable flag each.

    Group tags drive per-group learning rates and freezing: ``trunk``,
    ``latents``, ``pos_enc``, ``dataset_mlp:<name>``, ``dataset_head:<name>``.
    """

    def __init__(self):
        self._tensors: dict[str, Tensor] = {}
        self._groups: dict[str, str] = {}
        self._trainable: dict[str, bool] = {}

    def add(self, name: str, value: np.ndarray, group: str, trainable: bool = True) -> Tensor:
        if name in self._tensors:
            raise ShapeError(f"duplicate parameter name: {name}")
        t = Tensor(value, requires_grad=trainable)
        self._tensors[name] = t
        self._groups[name] = group
        self._trainable[name] = trainable
        return t

    def __getitem__(self, name: str) -> Tensor:
        return self._tensors[name]

    def __contains__(self, name: str) -> bool:
        return name in self._tensors

    def __len__(self):
        return len(self._tensors)

    def names(self) -> list[str]:
        return list(self._tensors)

    def group(self, name: str) -> str:
        return self._groups[name]

    def groups(self) -> set[str]:
        return set(self._groups.values())

    def trainable(self, name: str) -> bool:
        return self._trainable[name]

    def set_trainable(self, name: str, flag: bool):
        self._trainable[name] = flag
        self._tensors[name].requires_grad = flag

    def freeze_except(self, groups: set[str]):
        for name in self._tensors:
            self.set_trainable(name, self._groups[name] in groups)

    def items(self):
        return self._tensors.items()

    def trainable_items(self):
        return [(n, t) for n, t in self._tensors.items() if self._trainable[n]]

    def zero_grad(self):
        for t in self._tensors.values():
            t.grad = None

    def scale_grads(self, factor: float):
        for name, t in self.trainable_items():
            if t.grad is not None:
                t.grad *= factor

    def state_arrays(self) -> dict[str, np.ndarray]:
        return {n: t.data for n, t in self._tensors.items()}


def truncated_normal(rng: np.random.Generator, shape, std: float = 0.02, dtype=np.float64) -> np.ndarray:
    """Normal(0, std) resampled until every draw lies within two deviations."""
    out = rng.standard_normal(shape)
    bad = np.abs(out) > 2.0
    while bad.any():
        out[bad] = rng.standard_normal(int(bad.sum()))
        bad = np.abs(out) > 2.0
    return (out * std).astype(dtype)


# -- core ops ----------------------------------------------------------------


def gelu(x: Tensor) -> Tensor:
    """Exact (erf-based) GELU."""
    return T.mul(T.mul(x, 0.5), T.add(T.erf(T.mul(x, 1.0 / math.sqrt(2.0))), 1.0))


def layer_norm(x: Tensor, gain: Tensor, bias: Tensor, eps: float = 1e-5) -> Tensor:
    """Normalize the last axis to zero mean / unit variance, then affine."""
    mu = x.mean(axis=-1, keepdims=True)
    centered = T.sub(x, mu)
    var = T.mul(centered, centered).mean(axis=-1, keepdims=True)
    inv = T.div(1.0, T.sqrt(T.add(var, eps)))
    return T.add(T.mul(T.mul(centered, inv), gain), bias)


def attention(q: Tensor, k: Tensor, v: Tensor, mask=None, heads: int = 1) -> Tensor:
    """Multi-head scaled dot-product attention.

    ``q`` is (..., S_q, D), ``k`` and ``v`` are (..., S_k, D) with matching
    leading batch dims. ``mask`` is boolean, broadcastable to (..., S_q, S_k);
    True marks a permitted pair. Head splitting divides D; scores are scaled
    by 1/sqrt(D/heads). Output rows are convex combinations of the permitted
    value rows.
    """
    if q.ndim < 2 or k.ndim < 2 or v.ndim < 2:
        raise ShapeError("attention operands need at least 2 dims")
    width = q.shape[-1]
    if k.shape[-1] != width or v.shape[-1] != width:
        raise ShapeError(f"attention widths differ: q {q.shape}, k {k.shape}, v {v.shape}")
    if k.shape[:-1] != v.shape[:-1]:
        raise ShapeError(f"key/value shapes differ: {k.shape} vs {v.shape}")
    if width % heads != 0:
        raise ShapeError(f"width {width} not divisible by {heads} heads")

    s_q, s_k = q.shape[-2], k.shape[-2]
    batch = q.shape[:-2]
    score_counter.add(int(np.prod(batch, dtype=np.int64)) * s_q * s_k)

    head_dim = width // heads

    def split(t):
        t = t.reshape(t.shape[:-1] + (heads, head_dim))
        axes = tuple(range(t.ndim - 3)) + (t.ndim - 2, t.ndim - 3, t.ndim - 1)
        return T.transpose(t, axes)  # (..., heads, S, head_dim)

    qh, kh, vh = split(q), split(k), split(v)
    scores = T.mul(T.matmul(qh, kh.swap_last()), 1.0 / math.sqrt(head_dim))
    if mask is not None:
        mask = np.asarray(mask, dtype=bool)
        mask = np.broadcast_to(mask, batch + (s_q, s_k))
        mask = np.expand_dims(mask, -3)  # shared across heads
    weights = T.softmax(scores, mask=mask, axis=-1)
    out = T.matmul(weights, vh)  # (..., heads, S_q, head_dim)
    axes = tuple(range(out.ndim - 3)) + (out.ndim - 2, out.ndim - 3, out.ndim - 1)
    out = T.transpose(out, axes)
    return out.reshape(batch + (s_q, width))


# -- parameter bundles -------------------------------------------------------


@dataclass
class AttnParams:
    w_q: Tensor
    b_q: Tensor
    w_k: Tensor
    b_k: Tensor
    w_v: Tensor
    b_v: Tensor
    w_o: Tensor
    b_o: Tensor


@dataclass
class FfnParams:
    w1: Tensor
    b1: Tensor
    w2: Tensor
    b2: Tensor


@dataclass
class BlockParams:
    """Pre-norm self-attention block: LN -> attention -> add, LN -> FFN -> add."""

    ln1_gain: Tensor
    ln1_bias: Tensor
    attn: AttnParams
    ln2_gain: Tensor
    ln2_bias: Tensor
    ffn: FfnParams
    heads: int = 1


@dataclass
class CrossBlockParams:
    """Pre-norm cross-attention block with separate query/context norms."""

    ln_q_gain: Tensor
    ln_q_bias: Tensor
    ln_kv_gain: Tensor
    ln_kv_bias: Tensor
    attn: AttnParams
    ln2_gain: Tensor
    ln2_bias: Tensor
    ffn: FfnParams
    heads: int = 1


def init_attn(store: ParamStore, prefix: str, group: str, width: int, rng, dtype) -> AttnParams:
    def w(name):
        return store.add(f"{prefix}.{name}", truncated_normal(rng, (width, width), dtype=dtype), group)

    def b(name):
        return store.add(f"{prefix}.{name}", np.zeros(width, dtype=dtype), group)

    return AttnParams(w("w_q"), b("b_q"), w("w_k"), b("b_k"), w("w_v"), b("b_v"), w("w_o"), b("b_o"))


def init_ffn(store: ParamStore, prefix: str, group: str, width: int, hidden: int, rng, dtype) -> FfnParams:
    return FfnParams(
        store.add(f"{prefix}.w1", truncated_normal(rng, (width, hidden), dtype=dtype), group),
        store.add(f"{prefix}.b1", np.zeros(hidden, dtype=dtype), group),
        store.add(f"{prefix}.w2", truncated_normal(rng, (hidden, width), dtype=dtype), group),
        store.add(f"{prefix}.b2", np.zeros(width, dtype=dtype), group),
    )


def _init_ln(store: ParamStore, prefix: str, group: str, width: int, dtype):
    gain = store.add(f"{prefix}.gain", np.ones(width, dtype=dtype), group)
    bias = store.add(f"{prefix}.bias", np.zeros(width, dtype=dtype), group)
    return gain, bias


def init_block(store: ParamStore, prefix: str, group: str, width: int, hidden: int,
               heads: int, rng, dtype) -> BlockParams:
    g1, b1 = _init_ln(store, f"{prefix}.ln1", group, width, dtype)
    attn = init_attn(store, f"{prefix}.attn", group, width, rng, dtype)
    g2, b2 = _init_ln(store, f"{prefix}.ln2", group, width, dtype)
    ffn = init_ffn(store, f"{prefix}.ffn", group, width, hidden, rng, dtype)
    return BlockParams(g1, b1, attn, g2, b2, ffn, heads)


def init_cross_block(store: ParamStore, prefix: str, group: str, width: int, hidden: int,
                     heads: int, rng, dtype) -> CrossBlockParams:
    gq, bq = _init_ln(store, f"{prefix}.ln_q", group, width, dtype)
    gkv, bkv = _init_ln(store, f"{prefix}.ln_kv", group, width, dtype)
    attn = init_attn(store, f"{prefix}.attn", group, width, rng, dtype)
    g2, b2 = _init_ln(store, f"{prefix}.ln2", group, width, dtype)
    ffn = init_ffn(store, f"{prefix}.ffn", group, width, hidden, rng, dtype)
    return CrossBlockParams(gq, bq, gkv, bkv, attn, g2, b2, ffn, heads)


# -- forward passes ----------------------------------------------------------


def linear(x: Tensor, w: Tensor, b: Tensor | None = None) -> Tensor:
    out = T.matmul(x, w)
    return out if b is None else T.add(out, b)


def ffn_forward(x: Tensor, p: FfnParams) -> Tensor:
    return linear(gelu(linear(x, p.w1, p.b1)), p.w2, p.b2)


def _project_qkv(xq: Tensor, xkv: Tensor, p: AttnParams):
    return (
        linear(xq, p.w_q, p.b_q),
        linear(xkv, p.w_k, p.b_k),
        linear(xkv, p.w_v, p.b_v),
    )


def transformer_block(x: Tensor, params: BlockParams, mask=None) -> Tensor:
    """Pre-norm residual block: x + Attn(LN(x)) followed by x + FFN(LN(x))."""
    if not np.isfinite(x.data).all():
        raise InvalidValueError("transformer_block input contains non-finite values")
    h = layer_norm(x, params.ln1_gain, params.ln1_bias)
    q, k, v = _project_qkv(h, h, params.attn)
    a = attention(q, k, v, mask=mask, heads=params.heads)
    x = T.add(x, linear(a, params.attn.w_o, params.attn.b_o))
    h2 = layer_norm(x, params.ln2_gain, params.ln2_bias)
    return T.add(x, ffn_forward(h2, params.ffn))


def cross_block(latent: Tensor, context: Tensor, params: CrossBlockParams, mask=None) -> Tensor:
    """Latent queries attend into a context sequence, then pass through an FFN."""
    if not np.isfinite(latent.data).all() or not np.isfinite(context.data).all():
        raise InvalidValueError("cross_block input contains non-finite values")
    hq = layer_norm(latent, params.ln_q_gain, params.ln_q_bias)
    hkv = layer_norm(context, params.ln_kv_gain, params.ln_kv_bias)
    q, k, v = _project_qkv(hq, hkv, params.attn)
    a = attention(q, k, v, mask=mask, heads=params.heads)
    latent = T.add(latent, linear(a, params.attn.w_o, params.attn.b_o))
    h2 = layer_norm(latent, params.ln2_gain, params.ln2_bias)
    return T.add(latent, ffn_forward(h2, params.ffn))


# -- losses ------------------------------------------------------------------


def cross_entropy(logits: Tensor, labels: np.ndarray, reduction: str = "mean") -> Tensor:
    """Softmax cross-entropy for integer class labels."""
    labels = np.asarray(labels)
    n, c = logits.shape
    if n == 0:
        raise DataError("cross_entropy on zero rows")
    if labels.shape != (n,):
        raise ShapeError(f"labels shape {labels.shape} does not match logits {logits.shape}")
    if labels.min() < 0 or labels.max() >= c:
        raise DataError(f"label outside [0, {c})")
    lse = T.logsumexp(logits, axis=-1)
    picked = T.take(logits, (np.arange(n), labels))
    per_node = T.sub(lse, picked)
    return per_node.mean() if reduction == "mean" else per_node.sum()


def binary_cross_entropy(logits: Tensor, targets: np.ndarray, reduction: str = "mean") -> Tensor:
    """Per-label BCE with logits; ``reduction='sum'`` sums over rows only.

    The per-row loss is always the mean over labels, so a sum reduction over
    rows composes into the same mean-over-query-nodes objective used for the
    multiclass task.
    """
    targets = np.asarray(targets, dtype=logits.dtype)
    if targets.shape != logits.shape:
        raise ShapeError(f"targets shape {targets.shape} != logits {logits.shape}")
    per_entry = T.sub(T.softplus(logits), T.mul(logits, Tensor(targets)))
    per_row = per_entry.mean(axis=-1)
    return per_row.mean() if reduction == "mean" else per_row.sum()
