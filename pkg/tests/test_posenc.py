"""Eigenbasis values on known graphs; exact sign invariance of the encoder."""

import itertools

import numpy as np
import pytest

from graphfm.graphs import Graph
from graphfm.nn import ParamStore
from graphfm.posenc import (
    EigenBasis,
    cached_eigenbasis,
    eigen_residuals,
    init_signnet,
    laplacian_eigenvectors,
    load_pe_cache,
    save_pe_cache,
    signnet_encode,
)


def path_graph(n):
    g, _ = Graph.from_edges(n, [(i, i + 1) for i in range(n - 1)])
    return g


def complete_graph(n):
    g, _ = Graph.from_edges(n, [(i, j) for i in range(n) for j in range(i + 1, n)])
    return g


def random_graph(rng, n):
    edges = [(u, v) for u in range(n) for v in range(u + 1, n) if rng.random() < 0.3]
    if not edges:
        edges = [(0, 1)]
    g, _ = Graph.from_edges(n, edges)
    return g


def test_path3_eigenvalues():
    basis = laplacian_eigenvectors(path_graph(3), k=3)
    np.testing.assert_allclose(basis.eigvals, [0.0, 1.0, 2.0], atol=1e-12)


def test_complete4_eigenvalues():
    basis = laplacian_eigenvectors(complete_graph(4), k=4)
    np.testing.assert_allclose(basis.eigvals, [0.0, 4 / 3, 4 / 3, 4 / 3], atol=1e-12)


def test_pad_small_graph():
    g, _ = Graph.from_edges(2, [(0, 1)])
    basis = laplacian_eigenvectors(g, k=4)
    np.testing.assert_array_equal(basis.mask, [True, True, False, False])
    np.testing.assert_array_equal(basis.eigvecs[:, 2:], 0.0)
    np.testing.assert_array_equal(basis.eigvals[2:], 0.0)


def test_isolated_node_gets_identity_row():
    g, _ = Graph.from_edges(3, [(0, 1)])
    basis = laplacian_eigenvectors(g, k=3)
    # isolated node contributes an eigenvalue exactly 1
    assert np.isclose(basis.eigvals, 1.0, atol=1e-12).any()


def test_eigvals_sorted_in_range_and_orthonormal():
    rng = np.random.default_rng(0)
    for _ in range(10):
        g = random_graph(rng, int(rng.integers(4, 30)))
        k = min(6, g.num_nodes)
        basis = laplacian_eigenvectors(g, k=k)
        valid = basis.eigvecs[:, basis.mask]
        assert (np.diff(basis.eigvals[basis.mask]) >= -1e-12).all()
        assert basis.eigvals.min() >= 0.0 and basis.eigvals.max() <= 2.0
        gram = valid.T @ valid
        np.testing.assert_allclose(gram, np.eye(valid.shape[1]), atol=1e-6)


def test_residuals_small_on_every_basis():
    rng = np.random.default_rng(1)
    for _ in range(10):
        g = random_graph(rng, int(rng.integers(4, 40)))
        basis = laplacian_eigenvectors(g, k=min(8, g.num_nodes))
        assert eigen_residuals(g, basis).max() <= 1e-6


def test_iterative_path_matches_dense():
    import graphfm.posenc as posenc

    g = random_graph(np.random.default_rng(2), 60)
    dense = laplacian_eigenvectors(g, k=4)
    orig = posenc.DENSE_LIMIT
    posenc.DENSE_LIMIT = 10
    try:
        iterative = laplacian_eigenvectors(g, k=4)
    finally:
        posenc.DENSE_LIMIT = orig
    np.testing.assert_allclose(iterative.eigvals, dense.eigvals, atol=1e-7)
    assert eigen_residuals(g, iterative).max() <= 1e-6


# -- sign-invariant encoder ---------------------------------------------------


def make_encoder(k=4, pe_dim=6, seed=0):
    store = ParamStore()
    params = init_signnet(store, k, pe_dim, np.random.default_rng(seed), np.float64)
    return store, params


def test_sign_invariance_exact_all_patterns():
    g = random_graph(np.random.default_rng(3), 9)
    basis = laplacian_eigenvectors(g, k=4)
    store, params = make_encoder(k=4)
    base = signnet_encode(basis.eigvecs, basis.eigvals, params).data
    for signs in itertools.product((1.0, -1.0), repeat=4):
        flipped = basis.eigvecs * np.array(signs)
        out = signnet_encode(flipped, basis.eigvals, params).data
        np.testing.assert_array_equal(out, base)


def test_node_permutation_permutes_rows():
    g = random_graph(np.random.default_rng(4), 12)
    basis = laplacian_eigenvectors(g, k=4)
    store, params = make_encoder(k=4)
    perm = np.random.default_rng(5).permutation(12)
    base = signnet_encode(basis.eigvecs, basis.eigvals, params).data
    permuted = signnet_encode(basis.eigvecs[perm], basis.eigvals, params).data
    np.testing.assert_array_equal(permuted, base[perm])


def test_padded_columns_contribute_constant():
    g, _ = Graph.from_edges(2, [(0, 1)])
    basis = laplacian_eigenvectors(g, k=4)
    store, params = make_encoder(k=4)
    out = signnet_encode(basis.eigvecs, basis.eigvals, params).data
    # zeroing a padded column's (already zero) entries changes nothing
    clone = basis.eigvecs.copy()
    clone[:, 3] = 0.0
    np.testing.assert_array_equal(signnet_encode(clone, basis.eigvals, params).data, out)


def test_isomorphism_equivariance_simple_spectrum():
    # path graphs have simple spectra, so relabeling must permute PE rows
    g = path_graph(7)
    basis = laplacian_eigenvectors(g, k=5)
    store, params = make_encoder(k=5)
    base = signnet_encode(basis.eigvecs, basis.eigvals, params).data

    perm = np.array([3, 0, 6, 2, 5, 1, 4])
    relabeled = [(perm[i], perm[i + 1]) for i in range(6)]
    g2, _ = Graph.from_edges(7, relabeled)
    basis2 = laplacian_eigenvectors(g2, k=5)
    out = signnet_encode(basis2.eigvecs, basis2.eigvals, params).data
    np.testing.assert_allclose(out[perm], base, atol=1e-8)


def test_encoder_gradients():
    from graphfm.gradcheck import grad_check

    g = random_graph(np.random.default_rng(6), 8)
    basis = laplacian_eigenvectors(g, k=4)
    store, params = make_encoder(k=4)
    w = np.random.default_rng(7).standard_normal((8, 6))

    def loss():
        out = signnet_encode(basis.eigvecs, basis.eigvals, params)
        return (out * w).sum()

    report = grad_check(loss, store, tol=1e-6, max_coords=12)
    assert report.passed, report.worst()


def test_cache_round_trip(tmp_path):
    g = random_graph(np.random.default_rng(8), 15)
    basis = laplacian_eigenvectors(g, k=4)
    path = tmp_path / "x.gfpe"
    save_pe_cache(path, basis, pe_dim=6)
    loaded, pe_dim = load_pe_cache(path)
    assert pe_dim == 6
    assert loaded.eigvecs.shape == (15, 4)
    np.testing.assert_allclose(loaded.eigvals, basis.eigvals, atol=1e-6)
    np.testing.assert_allclose(loaded.eigvecs, basis.eigvecs, atol=1e-6)
    np.testing.assert_array_equal(loaded.mask, basis.mask)

    with open(path, "rb") as fh:
        assert fh.read(4) == b"GFPE"


def test_cached_eigenbasis_uses_file(tmp_path):
    g = random_graph(np.random.default_rng(9), 20)
    a = cached_eigenbasis(g, 4, cache_dir=tmp_path)
    files = list(tmp_path.glob("*.gfpe"))
    assert len(files) == 1
    b = cached_eigenbasis(g, 4, cache_dir=tmp_path)
    np.testing.assert_array_equal(a.eigvecs, b.eigvecs)
