"""SBM generator: expectation algebra, Monte Carlo checks, corpus determinism."""

import numpy as np
import pytest

from graphfm.errors import ConfigError
from graphfm.graphs import graph_stats, homophily_ratio
from graphfm.synth import (
    SbmParams,
    cluster_sizes,
    degree_propensities,
    generate_corpus,
    generate_sbm,
    solve_edge_density,
)


def test_param_range_validation():
    with pytest.raises(ConfigError):
        SbmParams(nvertex=10)
    with pytest.raises(ConfigError):
        SbmParams(nvertex=100, pq_ratio=50.0)
    with pytest.raises(ConfigError):
        SbmParams(nvertex=100, power_exponent=0.1)


def test_cluster_sizes_equal_when_divisible():
    np.testing.assert_array_equal(cluster_sizes(100, 4, 0.0), [25, 25, 25, 25])


def test_cluster_sizes_slope_and_total():
    sizes = cluster_sizes(101, 3, 0.5)
    assert sizes.sum() == 101
    assert (np.diff(sizes) >= 0).all()


def test_degree_propensities_mean_one_and_bounded():
    rng = np.random.default_rng(0)
    theta = degree_propensities(rng, 5000, 0.5)
    np.testing.assert_allclose(theta.mean(), 1.0, rtol=1e-12)
    assert theta.min() > 0


def test_edge_density_solution_hand_value():
    # 100 nodes, two equal clusters, unit propensities, ratio 9, target degree 10:
    # per-node expectation 49*p_in + 50*p_out = 10 gives p_out = 10/491
    theta = np.ones(100)
    labels = np.repeat([0, 1], 50)
    p_out, p_in = solve_edge_density(theta, labels, 2, 9.0, 10.0)
    np.testing.assert_allclose(p_out, 10.0 / 491.0, rtol=1e-12)
    np.testing.assert_allclose(p_in, 9.0 * p_out, rtol=1e-12)
    assert abs(p_out - 0.02037) < 1e-4


BASE = dict(nvertex=100, num_clusters=2, cluster_size_slope=0.0, avg_degree=10.0,
            feature_center_distance=1.0, power_exponent=1.0)


def test_mean_degree_matches_target_monte_carlo():
    degs = []
    for seed in range(20):
        g = generate_sbm(SbmParams(pq_ratio=9.0, seed=seed, **BASE))
        degs.append(2.0 * g.num_edges / g.num_nodes)
    assert abs(np.mean(degs) - 10.0) <= 1.5


@pytest.mark.parametrize("ratio,side", [(9.0, "high"), (1.0 / 9.0, "low")])
def test_homophily_follows_pq_ratio(ratio, side):
    hits = 0
    for seed in range(20):
        g = generate_sbm(SbmParams(pq_ratio=ratio, seed=seed, **BASE))
        h = homophily_ratio(g)
        hits += (h > 0.5) if side == "high" else (h < 0.5)
    assert hits >= 18


def test_homophily_monotone_in_pq_ratio():
    means = []
    for ratio in (0.2, 1.0, 5.0):
        vals = [homophily_ratio(generate_sbm(SbmParams(pq_ratio=ratio, seed=s, **BASE)))
                for s in range(20)]
        means.append(np.mean(vals))
    assert means[0] <= means[1] <= means[2]


def test_zero_center_distance_collapses_feature_clusters():
    params = SbmParams(pq_ratio=2.0, seed=3, **{**BASE, "feature_center_distance": 0.0,
                                                "nvertex": 2000})
    g = generate_sbm(params)
    for c in range(2):
        mean = g.features[g.labels == c].mean(axis=0)
        assert np.linalg.norm(mean) < 0.2  # pure noise around the origin


def test_generated_graphs_satisfy_invariants():
    # Graph.validate runs in the constructor; also check splits partition sanity
    g = generate_sbm(SbmParams(pq_ratio=3.0, seed=7, **BASE))
    assert not (g.train_mask & g.val_mask).any()
    assert (g.train_mask | g.val_mask | g.test_mask).sum() == g.num_nodes


def test_determinism_same_seed():
    a = generate_sbm(SbmParams(pq_ratio=4.0, seed=11, **BASE))
    b = generate_sbm(SbmParams(pq_ratio=4.0, seed=11, **BASE))
    assert a.content_hash() == b.content_hash()


def test_corpus_empty_and_negative():
    assert generate_corpus(0) == []
    with pytest.raises(ConfigError):
        generate_corpus(-1)


def test_corpus_reproducible_bit_exact():
    a = generate_corpus(4, master_seed=5)
    b = generate_corpus(4, master_seed=5)
    for (ga, ma, pa), (gb, mb, pb) in zip(a, b):
        assert ga.content_hash() == gb.content_hash()
        assert pa == pb


def test_corpus_72_desk_scale_all_valid():
    corpus = generate_corpus(72, ranges={"nvertex": (32, 2000)}, master_seed=1)
    assert len(corpus) == 72
    for g, m, p in corpus:
        assert g.num_nodes == p.nvertex
        assert m.num_classes == p.num_clusters
        assert g.labels.max() < m.num_classes


def test_corpus_range_validation():
    with pytest.raises(ConfigError):
        generate_corpus(2, ranges={"nvertex": (2, 100)})
