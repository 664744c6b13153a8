"""Graph model, directory round-trips, and homophily against a brute-force oracle."""

import numpy as np
import pytest

from graphfm.errors import DataError
from graphfm.graphs import (
    DatasetManifest,
    Graph,
    graph_stats,
    homophily_ratio,
    ingest_graph,
    load_graph,
    save_graph,
)

TRIANGLE = [(0, 1), (1, 2), (0, 2)]


def brute_force_homophily(graph):
    """Literal double loop over (node, neighbor) pairs; the oracle."""
    total, counted = 0.0, 0
    for v in range(graph.num_nodes):
        nbrs = graph.neighbors(v)
        if nbrs.size == 0:
            continue
        same = sum(1 for w in nbrs if graph.labels[w] == graph.labels[v])
        total += same / nbrs.size
        counted += 1
    if counted == 0:
        raise ZeroDivisionError
    return total / counted


def random_labeled_graph(rng, n=None):
    n = n or int(rng.integers(3, 40))
    p = rng.uniform(0.05, 0.5)
    edges = [(u, v) for u in range(n) for v in range(u + 1, n) if rng.random() < p]
    if not edges:
        edges = [(0, 1)]
    c = int(rng.integers(2, 5))
    labels = rng.integers(0, c, size=n)
    g, _ = Graph.from_edges(n, edges, labels=labels, num_classes=c)
    return g


def test_triangle_basics():
    g, stats = Graph.from_edges(3, TRIANGLE)
    assert g.num_nodes == 3
    assert g.num_edges == 3
    np.testing.assert_array_equal(g.degrees(), [2, 2, 2])
    assert stats == {"self_loops_dropped": 0, "duplicate_edges": 0}


def test_duplicate_edge_counted_once():
    g, stats = Graph.from_edges(3, [(0, 1), (0, 1), (1, 2)])
    assert g.num_edges == 2
    assert stats["duplicate_edges"] == 1


def test_self_loop_dropped_and_counted():
    g, stats = Graph.from_edges(3, [(0, 0), (0, 1)])
    assert g.num_edges == 1
    assert stats["self_loops_dropped"] == 1


def test_out_of_range_endpoint_rejected():
    with pytest.raises(DataError, match="outside"):
        Graph.from_edges(3, [(5, 1)])


def test_empty_graph_rejected():
    with pytest.raises(DataError):
        Graph.from_edges(0, [])


def test_symmetrizes_directed_input():
    g, _ = Graph.from_edges(4, [(0, 1), (1, 0), (2, 3)])
    assert g.num_edges == 2
    np.testing.assert_array_equal(g.neighbors(1), [0])
    np.testing.assert_array_equal(g.neighbors(3), [2])


def test_csr_symmetric_on_seeded_random_graphs():
    rng = np.random.default_rng(0)
    for _ in range(10):
        g = random_labeled_graph(rng)
        src = np.repeat(np.arange(g.num_nodes), np.diff(g.indptr))
        pairs = set(zip(src.tolist(), g.indices.tolist()))
        assert all((v, u) in pairs for u, v in pairs)


# -- homophily -----------------------------------------------------------------


def test_homophily_triangle_single_class():
    g, _ = Graph.from_edges(3, TRIANGLE, labels=[1, 1, 1], num_classes=2)
    assert homophily_ratio(g) == 1.0


def test_homophily_star_two_classes():
    star = [(0, i) for i in range(1, 5)]
    g, _ = Graph.from_edges(5, star, labels=[0, 1, 1, 1, 1], num_classes=2)
    assert homophily_ratio(g) == 0.0


def test_homophily_path_hand_value():
    g, _ = Graph.from_edges(3, [(0, 1), (1, 2)], labels=[0, 0, 1], num_classes=2)
    np.testing.assert_allclose(homophily_ratio(g), 0.5, rtol=1e-15)


def test_homophily_excludes_isolated_nodes():
    g, _ = Graph.from_edges(4, [(0, 1)], labels=[0, 0, 1, 1], num_classes=2)
    assert homophily_ratio(g) == 1.0


def test_homophily_all_isolated_errors():
    g = Graph(2, [0, 0, 0], [], np.ones((2, 1)), [0, 1], 2, "multiclass",
              np.zeros(2, bool), np.zeros(2, bool), np.zeros(2, bool))
    with pytest.raises(DataError, match="isolated"):
        homophily_ratio(g)


def test_homophily_matches_brute_force_on_50_random_graphs():
    rng = np.random.default_rng(1)
    for _ in range(50):
        g = random_labeled_graph(rng)
        assert abs(homophily_ratio(g) - brute_force_homophily(g)) <= 1e-12


# -- stats -----------------------------------------------------------------------


def test_stats_triangle():
    g, _ = Graph.from_edges(3, TRIANGLE, labels=[0, 0, 0], num_classes=2)
    s = graph_stats(g)
    assert s["avg_degree"] == 2.0
    assert s["regime"] == "homophilic"


def test_stats_star_avg_degree():
    g, _ = Graph.from_edges(5, [(0, i) for i in range(1, 5)])
    assert graph_stats(g)["avg_degree"] == pytest.approx(1.6)


def test_boundary_homophily_is_homophilic():
    # path a-b-c with labels A,A,B has ratio exactly 0.5
    g, _ = Graph.from_edges(3, [(0, 1), (1, 2)], labels=[0, 0, 1], num_classes=2)
    assert graph_stats(g)["regime"] == "homophilic"


# -- directory I/O -----------------------------------------------------------------


def write_dataset(tmp_path, name="toy", edges=TRIANGLE, n=3, labels=(0, 1, 0),
                  num_classes=2, splits=("train", "val", "test"), features=None,
                  task="multiclass", dataset_lr=None):
    d = tmp_path / name
    d.mkdir()
    meta = {"name": name, "num_nodes": n, "num_classes": num_classes, "task": task,
            "num_features": 1 if features is None else len(features[0])}
    if dataset_lr is not None:
        meta["dataset_lr"] = dataset_lr
    import json

    (d / "meta.json").write_text(json.dumps(meta))
    (d / "edges.tsv").write_text("".join(f"{u}\t{v}\n" for u, v in edges))
    if task == "multiclass":
        (d / "labels.csv").write_text("".join(f"{y}\n" for y in labels))
    else:
        (d / "labels.csv").write_text("".join(",".join(map(str, row)) + "\n" for row in labels))
    (d / "splits.csv").write_text("".join(f"{s}\n" for s in splits))
    if features is not None:
        (d / "features.csv").write_text("".join(",".join(map(str, row)) + "\n" for row in features))
    return d


def test_load_triangle_dataset(tmp_path):
    d = write_dataset(tmp_path)
    g, manifest, stats = ingest_graph(d)
    np.testing.assert_array_equal(g.degrees(), [2, 2, 2])
    assert manifest.name == "toy"
    assert manifest.dataset_lr is None
    np.testing.assert_array_equal(g.features, np.ones((3, 1)))


def test_load_counts_duplicates(tmp_path):
    d = write_dataset(tmp_path, edges=[(0, 1), (0, 1), (1, 2)])
    g, _, stats = ingest_graph(d)
    assert stats["duplicate_edges"] == 1
    assert g.num_edges == 2


def test_load_rejects_bad_endpoint(tmp_path):
    d = write_dataset(tmp_path, edges=[(5, 1)])
    with pytest.raises(DataError, match="outside"):
        load_graph(d)


def test_load_rejects_bad_label(tmp_path):
    d = write_dataset(tmp_path, labels=(0, 1, 7))
    with pytest.raises(DataError, match="label outside"):
        load_graph(d)


def test_load_rejects_empty_graph(tmp_path):
    d = write_dataset(tmp_path, n=0, edges=[], labels=(), splits=())
    with pytest.raises(DataError, match="no nodes"):
        load_graph(d)


def test_multilabel_dataset_roundtrip(tmp_path):
    labels = [[1, 0, 1], [0, 0, 0], [1, 1, 1]]
    d = write_dataset(tmp_path, task="multilabel", labels=labels, num_classes=3)
    g = load_graph(d)
    np.testing.assert_array_equal(g.labels, labels)


def test_roundtrip_identity(tmp_path):
    rng = np.random.default_rng(2)
    for i in range(5):
        g = random_labeled_graph(rng)
        n = g.num_nodes
        splits = rng.choice(["train", "val", "test", "none"], size=n)
        g = Graph(n, g.indptr, g.indices, rng.standard_normal((n, 3)), g.labels,
                  g.num_classes, "multiclass", splits == "train", splits == "val", splits == "test")
        d = save_graph(g, f"rt{i}", tmp_path / f"rt{i}")
        h = load_graph(d)
        assert h.num_nodes == g.num_nodes
        np.testing.assert_array_equal(h.indptr, g.indptr)
        np.testing.assert_array_equal(h.indices, g.indices)
        np.testing.assert_array_equal(h.labels, g.labels)
        np.testing.assert_array_equal(h.train_mask, g.train_mask)
        np.testing.assert_array_equal(h.val_mask, g.val_mask)
        np.testing.assert_array_equal(h.test_mask, g.test_mask)
        np.testing.assert_array_equal(h.features, g.features)
        # a second round trip is bit-identical
        d2 = save_graph(h, f"rt{i}", tmp_path / f"rt{i}b")
        assert (d / "edges.tsv").read_text() == (d2 / "edges.tsv").read_text()


def test_manifest_validation():
    with pytest.raises(DataError):
        DatasetManifest("x", ".", "multiclass", 1, 4, 10)
    with pytest.raises(DataError):
        DatasetManifest("x", ".", "multiclass", 3, 4, 10, dataset_lr=-1.0)
    m = DatasetManifest("gene-like", ".", "multiclass", 2, 1, 1103, dataset_lr=0.012)
    assert m.dataset_lr == 0.012
