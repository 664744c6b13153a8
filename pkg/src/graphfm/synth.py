"""Degree-corrected stochastic-block-model graph generator.

Generates node-classification graphs with controllable homophily: cluster
labels, a power-law degree profile, block-structured edge probabilities, and
Gaussian feature clusters. Parameter ranges follow the published generator
grid; a corpus helper samples parameter vectors and writes dataset
directories.
"""

from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np

from .errors import ConfigError
from .graphs import DatasetManifest, Graph

PARAM_RANGES = {
    "nvertex": (32, 500_000),
    "pq_ratio": (0.1, 10.0),
    "avg_degree": (1.0, 20.0),
    "feature_center_distance": (0.0, 5.0),
    "num_clusters": (2, 6),
    "cluster_size_slope": (0.0, 0.5),
    "power_exponent": (0.5, 1.0),
}


@dataclass(frozen=True)
class SbmParams:
    nvertex: int
    pq_ratio: float = 1.0
    avg_degree: float = 5.0
    feature_center_distance: float = 1.0
    num_clusters: int = 2
    cluster_size_slope: float = 0.0
    power_exponent: float = 1.0
    feature_dim: int = 16
    seed: int = 0

    def __post_init__(self):
        for field_name, (lo, hi) in PARAM_RANGES.items():
            value = getattr(self, field_name)
            if not (lo <= value <= hi):
                raise ConfigError(f"{field_name}={value} outside [{lo}, {hi}]")
        if self.feature_dim < 1:
            raise ConfigError("feature_dim must be >= 1")


def cluster_sizes(nvertex: int, num_clusters: int, slope: float) -> np.ndarray:
    """Sizes proportional to 1 + slope * k, rounded by largest remainder."""
    weights = 1.0 + slope * np.arange(num_clusters)
    exact = nvertex * weights / weights.sum()
    sizes = np.floor(exact).astype(np.int64)
    remainder = exact - sizes
    short = nvertex - sizes.sum()
    for idx in np.argsort(-remainder)[:short]:
        sizes[idx] += 1
    return sizes


def degree_propensities(rng: np.random.Generator, nvertex: int, exponent: float) -> np.ndarray:
    """Power-law draws (density ~ x^(a-1) on (0, 1]) normalized to mean 1."""
    raw = rng.random(nvertex) ** (1.0 / exponent)
    return raw / raw.mean()


def solve_edge_density(theta: np.ndarray, labels: np.ndarray, num_clusters: int,
                       pq_ratio: float, avg_degree: float) -> tuple[float, float]:
    """Out-of-cluster edge probability making the expected mean degree exact.

    Expected edges are sum over pairs of theta_u * theta_v * p_block with
    p_in = pq_ratio * p_out, so p_out is the target degree divided by the
    theta-weighted pair count.
    """
    sums = np.zeros(num_clusters)
    sq = np.zeros(num_clusters)
    np.add.at(sums, labels, theta)
    np.add.at(sq, labels, theta * theta)
    within = float(((sums * sums - sq) / 2.0).sum())
    cross = float((sums.sum() ** 2 - (sums * sums).sum()) / 2.0)
    weighted_pairs = pq_ratio * within + cross
    if weighted_pairs <= 0:
        raise ConfigError("cannot satisfy average degree: no eligible node pairs")
    p_out = avg_degree * len(theta) / 2.0 / weighted_pairs
    return p_out, pq_ratio * p_out


def generate_sbm(params: SbmParams) -> Graph:
    """Sample one graph; deterministic under ``params.seed``.

    Pairwise edge probability is min(1, theta_u * theta_v * p_block). Labels
    are cluster ids, features are unit-covariance Gaussians around cluster
    centers placed at radius ``feature_center_distance`` in random directions,
    and nodes get a random 60/20/20 train/val/test split.
    """
    rng = np.random.default_rng(params.seed)
    n = params.nvertex
    sizes = cluster_sizes(n, params.num_clusters, params.cluster_size_slope)
    labels = np.repeat(np.arange(params.num_clusters), sizes)
    theta = degree_propensities(rng, n, params.power_exponent)
    p_out, p_in = solve_edge_density(theta, labels, params.num_clusters,
                                     params.pq_ratio, params.avg_degree)

    edges_u, edges_v = [], []
    chunk = max(1, int(4_000_000 // max(n, 1)))
    for start in range(0, n, chunk):
        stop = min(start + chunk, n)
        block_p = np.where(labels[start:stop, None] == labels[None, :], p_in, p_out)
        probs = np.minimum(1.0, theta[start:stop, None] * theta[None, :] * block_p)
        draws = rng.random((stop - start, n))
        rows, cols = np.nonzero(draws < probs)
        rows = rows + start
        upper = rows < cols  # each unordered pair decided by its upper-triangle draw
        edges_u.append(rows[upper])
        edges_v.append(cols[upper])
    edges = np.stack([np.concatenate(edges_u), np.concatenate(edges_v)], axis=1)

    directions = rng.standard_normal((params.num_clusters, params.feature_dim))
    directions /= np.linalg.norm(directions, axis=1, keepdims=True)
    centers = params.feature_center_distance * directions
    features = centers[labels] + rng.standard_normal((n, params.feature_dim))

    split_draw = rng.random(n)
    train = split_draw < 0.6
    val = (split_draw >= 0.6) & (split_draw < 0.8)
    test = split_draw >= 0.8

    graph, _ = Graph.from_edges(
        n, edges, features=features, labels=labels, num_classes=params.num_clusters,
        train_mask=train, val_mask=val, test_mask=test,
    )
    return graph


DEFAULT_CORPUS_RANGES = {
    "nvertex": (32, 2000),
    "pq_ratio": (0.1, 10.0),
    "avg_degree": (2.0, 20.0),
    "feature_center_distance": (0.5, 5.0),
    "num_clusters": (2, 6),
    "cluster_size_slope": (0.0, 0.5),
    "power_exponent": (0.5, 1.0),
}


def sample_params(rng: np.random.Generator, ranges: dict, feature_dim: int, seed: int) -> SbmParams:
    """One parameter vector: uniform draws, log-uniform for nvertex."""
    lo, hi = ranges["nvertex"]
    nvertex = int(round(np.exp(rng.uniform(np.log(lo), np.log(hi)))))
    nvertex = min(max(nvertex, lo), hi)
    lo_c, hi_c = ranges["num_clusters"]
    return SbmParams(
        nvertex=nvertex,
        pq_ratio=rng.uniform(*ranges["pq_ratio"]),
        avg_degree=rng.uniform(*ranges["avg_degree"]),
        feature_center_distance=rng.uniform(*ranges["feature_center_distance"]),
        num_clusters=int(rng.integers(lo_c, hi_c + 1)),
        cluster_size_slope=rng.uniform(*ranges["cluster_size_slope"]),
        power_exponent=rng.uniform(*ranges["power_exponent"]),
        feature_dim=feature_dim,
        seed=seed,
    )


def generate_corpus(count: int, ranges: dict | None = None, master_seed: int = 0,
                    feature_dim: int = 16, name_prefix: str = "sbm") -> list[tuple[Graph, DatasetManifest, SbmParams]]:
    """Sample ``count`` graphs with independently drawn parameter vectors."""
    if count < 0:
        raise ConfigError(f"count must be >= 0, got {count}")
    merged = dict(DEFAULT_CORPUS_RANGES)
    if ranges:
        merged.update(ranges)
    for key, (lo, hi) in merged.items():
        full_lo, full_hi = PARAM_RANGES[key]
        if lo > hi or lo < full_lo or hi > full_hi:
            raise ConfigError(f"range {key}=({lo}, {hi}) outside generator bounds ({full_lo}, {full_hi})")

    out = []
    seeds = np.random.SeedSequence(master_seed).spawn(count)
    rng = np.random.default_rng(np.random.SeedSequence((master_seed, 0x5B)))
    for i in range(count):
        graph_seed = int(seeds[i].generate_state(1)[0])
        params = sample_params(rng, merged, feature_dim, graph_seed)
        graph = generate_sbm(params)
        manifest = DatasetManifest(
            name=f"{name_prefix}-{i:03d}", path="", task="multiclass",
            num_classes=params.num_clusters, num_features=feature_dim,
            num_nodes=params.nvertex, role="pretrain",
        )
        out.append((graph, manifest, params))
    return out
