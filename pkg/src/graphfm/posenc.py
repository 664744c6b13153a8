"""Graph-Laplacian eigenvectors and the sign-invariant positional encoder.

The node PE is built from the k smallest eigenpairs of the symmetric
normalized Laplacian. Eigenvectors carry an arbitrary sign, so the encoder
feeds each entry through a small network phi in both signs and sums:
``p_i = rho(concat_j [phi(v_j[i], lam_j) + phi(-v_j[i], lam_j)])``. The sum
makes the output exactly (bit-level) invariant to per-column sign flips.

Graphs with fewer than k nodes get zero-padded columns with a validity mask;
the padded columns pass (0, 0) through phi, which keeps them distinguishable
from genuine zero entries of a real eigenvector only through the eigenvalue
argument.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass
from pathlib import Path

import numpy as np
import scipy.linalg
import scipy.sparse
from scipy.sparse.linalg import ArpackNoConvergence, eigsh

from . import tensor as T
from .errors import NumericError
from .nn import ParamStore, gelu, linear, truncated_normal
from .tensor import Tensor

DENSE_LIMIT = 2048
CACHE_MAGIC = b"GFPE"


@dataclass
class EigenBasis:
    """k smallest eigenpairs, zero-padded when the graph is smaller than k."""

    eigvals: np.ndarray  # (k,)
    eigvecs: np.ndarray  # (num_nodes, k), unit-norm valid columns
    mask: np.ndarray     # (k,) bool, True for valid columns

    @property
    def k(self) -> int:
        return self.eigvals.shape[0]


def normalized_laplacian(graph) -> scipy.sparse.csr_matrix:
    """I - D^(-1/2) A D^(-1/2); rows of isolated nodes are identity rows."""
    n = graph.num_nodes
    deg = graph.degrees().astype(np.float64)
    inv_sqrt = np.zeros(n)
    nz = deg > 0
    inv_sqrt[nz] = 1.0 / np.sqrt(deg[nz])
    src = np.repeat(np.arange(n), np.diff(graph.indptr))
    vals = -inv_sqrt[src] * inv_sqrt[graph.indices]
    adj_part = scipy.sparse.csr_matrix((vals, graph.indices.copy(), graph.indptr.copy()), shape=(n, n))
    return scipy.sparse.eye(n, format="csr") + adj_part


def laplacian_eigenvectors(graph, k: int = 8) -> EigenBasis:
    """The k smallest Laplacian eigenpairs, dense below 2048 nodes, Lanczos above."""
    n = graph.num_nodes
    lap = normalized_laplacian(graph)
    real = min(k, n)
    if n <= DENSE_LIMIT or real >= n - 1:
        dense = lap.toarray()
        vals, vecs = scipy.linalg.eigh(dense, subset_by_index=[0, real - 1])
    else:
        try:
            vals, vecs = eigsh(lap, k=real, which="SA", tol=1e-8)
        except ArpackNoConvergence as exc:
            got = len(exc.eigenvalues)
            raise NumericError(
                f"eigensolver converged only {got}/{real} pairs on a {n}-node graph"
            ) from exc
        order = np.argsort(vals)
        vals, vecs = vals[order], vecs[:, order]
    vals = np.clip(vals, 0.0, 2.0)
    if real < k:
        vals = np.concatenate([vals, np.zeros(k - real)])
        vecs = np.concatenate([vecs, np.zeros((n, k - real))], axis=1)
    mask = np.arange(k) < real
    return EigenBasis(vals, vecs, mask)


def eigen_residuals(graph, basis: EigenBasis) -> np.ndarray:
    """Per valid eigenpair: ||L v - lambda v||_2."""
    lap = normalized_laplacian(graph)
    out = []
    for j in range(basis.k):
        if not basis.mask[j]:
            continue
        v = basis.eigvecs[:, j]
        out.append(np.linalg.norm(lap @ v - basis.eigvals[j] * v))
    return np.array(out)


# -- sign-invariant encoder -----------------------------------------------------

PHI_HIDDEN = 16
RHO_HIDDEN = 32


@dataclass
class SignNetParams:
    phi_w0: Tensor
    phi_b0: Tensor
    phi_w1: Tensor
    phi_b1: Tensor
    rho_w0: Tensor
    rho_b0: Tensor
    rho_w1: Tensor
    rho_b1: Tensor
    num_eigvecs: int
    pe_dim: int


def init_signnet(store: ParamStore, num_eigvecs: int, pe_dim: int, rng, dtype) -> SignNetParams:
    def add(name, shape, zero=False):
        value = np.zeros(shape, dtype=dtype) if zero else truncated_normal(rng, shape, dtype=dtype)
        return store.add(f"signnet.{name}", value, "pos_enc")

    return SignNetParams(
        phi_w0=add("phi.w0", (2, PHI_HIDDEN)),
        phi_b0=add("phi.b0", (PHI_HIDDEN,), zero=True),
        phi_w1=add("phi.w1", (PHI_HIDDEN, PHI_HIDDEN)),
        phi_b1=add("phi.b1", (PHI_HIDDEN,), zero=True),
        rho_w0=add("rho.w0", (num_eigvecs * PHI_HIDDEN, RHO_HIDDEN)),
        rho_b0=add("rho.b0", (RHO_HIDDEN,), zero=True),
        rho_w1=add("rho.w1", (RHO_HIDDEN, pe_dim)),
        rho_b1=add("rho.b1", (pe_dim,), zero=True),
        num_eigvecs=num_eigvecs,
        pe_dim=pe_dim,
    )


def _phi(pairs: Tensor, params: SignNetParams) -> Tensor:
    return linear(gelu(linear(pairs, params.phi_w0, params.phi_b0)), params.phi_w1, params.phi_b1)


def signnet_encode(eigvecs: np.ndarray, eigvals: np.ndarray, params: SignNetParams,
                   dtype=np.float64) -> Tensor:
    """Sign-invariant PE for each row of ``eigvecs``; differentiable in params.

    ``eigvecs`` may be any row subset of a basis (shape (n, k)); ``eigvals``
    has shape (k,). Padded columns must hold zeros in both arrays.
    """
    n, k = eigvecs.shape
    if k != params.num_eigvecs:
        raise NumericError(f"basis has {k} columns, encoder expects {params.num_eigvecs}")
    vals = np.broadcast_to(eigvals.astype(dtype), (n, k))
    entries = eigvecs.astype(dtype)
    plus = np.stack([entries, vals], axis=-1).reshape(n * k, 2)
    minus = np.stack([-entries, vals], axis=-1).reshape(n * k, 2)
    summed = T.add(_phi(Tensor(plus), params), _phi(Tensor(minus), params))
    flat = summed.reshape((n, k * PHI_HIDDEN))
    return linear(gelu(linear(flat, params.rho_w0, params.rho_b0)), params.rho_w1, params.rho_b1)


# -- basis cache files -----------------------------------------------------------


def save_pe_cache(path, basis: EigenBasis, pe_dim: int):
    """Binary cache: magic, k, pe_dim header; f32 little-endian payloads."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    k = basis.k
    with open(path, "wb") as fh:
        fh.write(CACHE_MAGIC)
        fh.write(struct.pack("<II", k, pe_dim))
        fh.write(basis.eigvals.astype("<f4").tobytes())
        fh.write(basis.eigvecs.astype("<f4").tobytes())
        fh.write(basis.mask.astype("<f4").tobytes())


def load_pe_cache(path) -> tuple[EigenBasis, int]:
    path = Path(path)
    raw = path.read_bytes()
    if raw[:4] != CACHE_MAGIC:
        raise NumericError(f"{path} is not a PE cache file")
    k, pe_dim = struct.unpack("<II", raw[4:12])
    payload = np.frombuffer(raw[12:], dtype="<f4")
    n = (payload.size - 2 * k) // k
    if payload.size != 2 * k + n * k:
        raise NumericError(f"{path} has inconsistent payload length")
    eigvals = payload[:k].astype(np.float64)
    eigvecs = payload[k:k + n * k].reshape(n, k).astype(np.float64)
    mask = payload[k + n * k:] > 0.5
    return EigenBasis(eigvals, eigvecs, mask), int(pe_dim)


def cached_eigenbasis(graph, k: int, cache_dir=None, pe_dim: int = 0) -> EigenBasis:
    """Compute the basis, using a file cache keyed by adjacency hash if given.

    The cache stores float32, so callers needing full float64 precision
    (gradient checks) should pass ``cache_dir=None``.
    """
    if cache_dir is None:
        return laplacian_eigenvectors(graph, k)
    path = Path(cache_dir) / f"{graph.structure_hash()}-k{k}.gfpe"
    if path.exists():
        basis, _ = load_pe_cache(path)
        if basis.k == k and basis.eigvecs.shape[0] == graph.num_nodes:
            return basis
    basis = laplacian_eigenvectors(graph, k)
    save_pe_cache(path, basis, pe_dim)
    # return the quantized values so cache hits and misses agree bit-for-bit
    return load_pe_cache(path)[0]
