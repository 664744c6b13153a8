"""Per-dataset feature projection fused with positional encodings.

Every dataset gets its own adapter: a two-layer feature MLP into the model
width, a linear projection for the positional encoding, and the output head.
A node token is the sum of the two projections, which keeps the token width
uniform across datasets with different feature counts.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import tensor as T
from .errors import AdapterMismatchError
from .nn import ParamStore, gelu, linear, truncated_normal
from .tensor import Tensor


@dataclass
class TokenSequence:
    """Tokens for one graph (or one contiguous slice of a subgraph)."""

    graph_id: str
    tokens: Tensor        # (n, dim)
    node_ids: np.ndarray  # original node indices in the parent graph

    def __len__(self):
        return self.tokens.shape[0]


@dataclass
class DatasetAdapter:
    dataset: str
    num_features: int
    num_classes: int
    mlp_w0: Tensor
    mlp_b0: Tensor
    mlp_w1: Tensor
    mlp_b1: Tensor
    pe_w: Tensor    # (pe_dim, dim), no bias so zero weights keep tokens feature-only
    head_w: Tensor  # (dim, num_classes), no bias: logits = out[0] @ head_w


def init_adapter(store: ParamStore, dataset: str, num_features: int, num_classes: int,
                 dim: int, pe_dim: int, rng, dtype) -> DatasetAdapter:
    mlp_group = f"dataset_mlp:{dataset}"
    head_group = f"dataset_head:{dataset}"

    def add(name, shape, group, zero=False):
        value = np.zeros(shape, dtype=dtype) if zero else truncated_normal(rng, shape, dtype=dtype)
        return store.add(f"adapter.{dataset}.{name}", value, group)

    return DatasetAdapter(
        dataset=dataset,
        num_features=num_features,
        num_classes=num_classes,
        mlp_w0=add("mlp.w0", (num_features, dim), mlp_group),
        mlp_b0=add("mlp.b0", (dim,), mlp_group, zero=True),
        mlp_w1=add("mlp.w1", (dim, dim), mlp_group),
        mlp_b1=add("mlp.b1", (dim,), mlp_group, zero=True),
        pe_w=add("pe.w", (pe_dim, dim), mlp_group),
        head_w=add("head.w", (dim, num_classes), head_group),
    )


def embed_nodes(features: np.ndarray, pe: Tensor, adapter: DatasetAdapter,
                graph_id: str, node_ids: np.ndarray, dtype=np.float64) -> TokenSequence:
    """Token per node: MLP(features) + pe @ pe_w."""
    features = np.asarray(features, dtype=dtype)
    if features.ndim != 2 or features.shape[1] != adapter.num_features:
        raise AdapterMismatchError(
            f"adapter {adapter.dataset!r} expects {adapter.num_features} features, "
            f"got shape {features.shape}"
        )
    if pe.shape[0] != features.shape[0]:
        raise AdapterMismatchError(
            f"positional encoding rows {pe.shape[0]} != node count {features.shape[0]}"
        )
    if pe.shape[1] != adapter.pe_w.shape[0]:
        raise AdapterMismatchError(
            f"positional encoding width {pe.shape[1]} != projection input {adapter.pe_w.shape[0]}"
        )
    projected = linear(gelu(linear(Tensor(features), adapter.mlp_w0, adapter.mlp_b0)),
                       adapter.mlp_w1, adapter.mlp_b1)
    tokens = T.add(projected, T.matmul(pe, adapter.pe_w))
    return TokenSequence(graph_id=graph_id, tokens=tokens, node_ids=np.asarray(node_ids, dtype=np.int64))
