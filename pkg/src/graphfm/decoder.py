"""Per-node readout: query token, sampled neighbors, and latent tokens.

For each query node we assemble a short sequence [self, neighbors..., latents...]
with learned type embeddings, run it through a small transformer, and read the
prediction from position 0 through the dataset head. Neighbor slots that could
not be filled are zero-content and masked out of attention for every query, so
their values cannot influence position 0 even at the last bit.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import tensor as T
from .errors import GraphMismatchError, ShapeError
from .nn import BlockParams, binary_cross_entropy, cross_entropy, transformer_block
from .tensor import Tensor
from .tokenizer import DatasetAdapter

TYPE_SELF, TYPE_NEIGHBOR, TYPE_LATENT = 0, 1, 2


def sample_neighbors(graph, node: int, max_neighbors: int, walk_len: int, seed: int) -> np.ndarray:
    """Nodes visited by ``max_neighbors`` random walks of ``walk_len`` steps.

    The query node itself is excluded; first-visit order is kept and the
    result is truncated to ``max_neighbors`` entries. Deterministic in
    (seed, node), independent of any batch this node appears in.
    """
    if walk_len <= 0 or max_neighbors <= 0:
        return np.empty(0, dtype=np.int64)
    rng = np.random.default_rng(np.random.SeedSequence((seed, int(node))))
    current = np.full(max_neighbors, node, dtype=np.int64)
    visited: list[int] = []
    seen = {int(node)}
    for _ in range(walk_len):
        deg = graph.indptr[current + 1] - graph.indptr[current]
        alive = deg > 0
        if not alive.any():
            break
        steps = np.zeros_like(current)
        steps[alive] = graph.indptr[current[alive]] + rng.integers(0, deg[alive])
        nxt = current.copy()
        nxt[alive] = graph.indices[steps[alive]]
        for w in nxt[alive]:
            w = int(w)
            if w not in seen:
                seen.add(w)
                visited.append(w)
        current = nxt
    return np.array(visited[:max_neighbors], dtype=np.int64)


def sample_neighbor_table(graph, nodes: np.ndarray, max_neighbors: int, walk_len: int,
                          seed: int) -> tuple[np.ndarray, np.ndarray]:
    """Fixed-width neighbor ids and validity for a batch of query nodes."""
    n = len(nodes)
    ids = np.zeros((n, max_neighbors), dtype=np.int64)
    valid = np.zeros((n, max_neighbors), dtype=bool)
    for i, node in enumerate(nodes):
        nbrs = sample_neighbors(graph, int(node), max_neighbors, walk_len, seed)
        ids[i, :len(nbrs)] = nbrs
        valid[i, :len(nbrs)] = True
    return ids, valid


@dataclass
class NodeSequence:
    """Decoder input for a single query node."""

    tokens: Tensor          # (1 + max_neighbors + num_latents, dim)
    token_types: np.ndarray
    valid: np.ndarray
    query_node: int
    graph_id: str


def sequence_layout(max_neighbors: int, num_latents: int) -> np.ndarray:
    return np.concatenate([
        [TYPE_SELF],
        np.full(max_neighbors, TYPE_NEIGHBOR),
        np.full(num_latents, TYPE_LATENT),
    ]).astype(np.int8)


def build_node_sequences(x_query: Tensor, x_neighbors: Tensor, neighbor_valid: np.ndarray,
                         latents: Tensor, type_emb: Tensor, graph_id: str,
                         latent_graph_id: str) -> tuple[Tensor, np.ndarray]:
    """Batched sequence assembly.

    ``x_query`` is (n, dim), ``x_neighbors`` (n, T, dim) with invalid slots
    zeroed by the mask here, ``latents`` (K, dim) shared by all n queries.
    Returns tokens (n, 1+T+K, dim) and a per-key validity mask (n, 1+T+K).
    """
    if latent_graph_id != graph_id:
        raise GraphMismatchError(
            f"latents of graph {latent_graph_id!r} paired with nodes of {graph_id!r}")
    n, num_neighbors = neighbor_valid.shape
    num_latents = latents.shape[0]
    dim = x_query.shape[-1]
    dtype = x_query.dtype

    masked_nbrs = T.mul(x_neighbors, Tensor(neighbor_valid[:, :, None].astype(dtype)))
    lat = T.broadcast_to(latents.reshape((1, num_latents, dim)), (n, num_latents, dim))
    content = T.concat([x_query.reshape((n, 1, dim)), masked_nbrs, lat], axis=1)

    types = sequence_layout(num_neighbors, num_latents)
    tokens = T.add(content, T.take(type_emb, types))
    valid = np.concatenate([
        np.ones((n, 1), dtype=bool),
        neighbor_valid,
        np.ones((n, num_latents), dtype=bool),
    ], axis=1)
    return tokens, valid


def build_node_sequence(x_self: Tensor, x_neighbors: Tensor, neighbor_valid: np.ndarray,
                        latents: Tensor, type_emb: Tensor, query_node: int,
                        graph_id: str, latent_graph_id: str) -> NodeSequence:
    """Single-node form of :func:`build_node_sequences`."""
    tokens, valid = build_node_sequences(
        x_self.reshape((1, -1)), x_neighbors.reshape((1,) + x_neighbors.shape),
        neighbor_valid.reshape(1, -1), latents, type_emb, graph_id, latent_graph_id)
    return NodeSequence(
        tokens=T.take(tokens, 0),
        token_types=sequence_layout(neighbor_valid.size, latents.shape[0]),
        valid=valid[0],
        query_node=query_node,
        graph_id=graph_id,
    )


def decode(tokens: Tensor, valid: np.ndarray, blocks: list[BlockParams],
           adapter: DatasetAdapter, graph_ids=None) -> Tensor:
    """Run the decoder stack and map position 0 through the dataset head.

    ``tokens`` is (n, S, dim); ``valid`` marks usable keys per sequence. All
    sequences must belong to the adapter's dataset.
    """
    if graph_ids is not None:
        wrong = [g for g in graph_ids if g != adapter.dataset]
        if wrong:
            raise GraphMismatchError(
                f"decode got sequences from {wrong[0]!r} with adapter {adapter.dataset!r}")
    n, length, _ = tokens.shape
    if valid.shape != (n, length):
        raise ShapeError(f"validity mask shape {valid.shape} != {(n, length)}")
    mask = np.broadcast_to(valid[:, None, :], (n, length, length))
    x = tokens
    for block in blocks:
        x = transformer_block(x, block, mask=mask)
    front = T.take(x, (slice(None), 0))
    return T.matmul(front, adapter.head_w)


def loss(logits: Tensor, labels: np.ndarray, task: str, reduction: str = "mean") -> Tensor:
    """Mean (or sum) over query nodes of the task loss."""
    if task == "multiclass":
        return cross_entropy(logits, labels, reduction=reduction)
    if task == "multilabel":
        return binary_cross_entropy(logits, labels, reduction=reduction)
    raise ShapeError(f"unknown task {task!r}")
