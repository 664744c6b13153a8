"""Latent-token graph compressor.

Token sequences from several graphs are packed back to back into one long
sequence with segment bookkeeping instead of padding. Each segment is
compressed by cross-attending a shared bank of learned latent tokens into it;
attention never crosses a segment boundary, which is realized structurally by
computing the cross-attention per segment (the block-diagonal mask evaluates
exactly num_latents * segment_length score pairs per graph, never more). The
per-graph latent stacks then run through self-attention blocks batched over
graphs, so latents of different graphs cannot interact there either.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import tensor as T
from .errors import ShapeError
from .nn import (
    BlockParams,
    CrossBlockParams,
    ParamStore,
    cross_block,
    init_block,
    init_cross_block,
    transformer_block,
    truncated_normal,
)
from .tensor import Tensor
from .tokenizer import TokenSequence


@dataclass
class LatentBank:
    """The shared learned latent tokens every graph is compressed into."""

    tokens: Tensor  # (num_latents, dim)


def init_latent_bank(store: ParamStore, num_latents: int, dim: int, rng, dtype) -> LatentBank:
    return LatentBank(store.add("latents", truncated_normal(rng, (num_latents, dim), dtype=dtype),
                                "latents"))


@dataclass
class PackedBatch:
    tokens: Tensor           # (total, dim) concatenation of all members
    segment_ids: np.ndarray  # (total,) member index per token
    offsets: np.ndarray      # (members + 1,)
    members: list[TokenSequence]

    @property
    def num_segments(self) -> int:
        return len(self.members)


def pack_batch(seqs: list[TokenSequence]) -> PackedBatch:
    """Concatenate sequences in order; no padding tokens exist."""
    if not seqs:
        raise ShapeError("pack_batch needs at least one sequence")
    sizes = [len(s) for s in seqs]
    if any(n == 0 for n in sizes):
        raise ShapeError("pack_batch got an empty member sequence")
    tokens = T.concat([s.tokens for s in seqs], axis=0)
    segment_ids = np.repeat(np.arange(len(seqs)), sizes)
    offsets = np.concatenate([[0], np.cumsum(sizes)])
    return PackedBatch(tokens, segment_ids, offsets, list(seqs))


@dataclass
class EncoderParams:
    cross: CrossBlockParams
    blocks: list[BlockParams]


def init_encoder(store: ParamStore, dim: int, ffn_hidden: int, depth: int,
                 cross_heads: int, self_heads: int, rng, dtype) -> EncoderParams:
    cross = init_cross_block(store, "enc.cross", "trunk", dim, ffn_hidden, cross_heads, rng, dtype)
    blocks = [init_block(store, f"enc.self.{i}", "trunk", dim, ffn_hidden, self_heads, rng, dtype)
              for i in range(depth)]
    return EncoderParams(cross, blocks)


@dataclass
class LatentState:
    """One compressed latent stack per packed segment."""

    latents: Tensor  # (num_segments, num_latents, dim)
    graph_ids: list[str]

    def for_segment(self, index: int) -> Tensor:
        return T.take(self.latents, index)


def encode(batch: PackedBatch, bank: LatentBank, params: EncoderParams) -> LatentState:
    """Compress every packed segment into its own copy of the latent bank."""
    per_graph = []
    for i in range(batch.num_segments):
        lo, hi = int(batch.offsets[i]), int(batch.offsets[i + 1])
        context = T.take(batch.tokens, slice(lo, hi))
        per_graph.append(cross_block(bank.tokens, context, params.cross))
    z = T.stack(per_graph, axis=0)
    for block in params.blocks:
        z = transformer_block(z, block)
    return LatentState(z, [s.graph_id for s in batch.members])
