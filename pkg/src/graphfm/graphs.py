"""Graph data model, dataset directory I/O, and corpus statistics.

A dataset lives in a directory with line-oriented text files:

    meta.json      name, num_nodes, num_features, num_classes,
                   task ("multiclass" | "multilabel"), optional dataset_lr
    edges.tsv      one edge per line, ``u<TAB>v``, 0-based ids
    features.csv   optional; num_nodes rows of comma-separated floats
    labels.csv     multiclass: one integer per line;
                   multilabel: num_classes comma-separated {0,1} per line
    splits.csv     one of train/val/test/none per line

Graphs are stored undirected: edges are symmetrized, deduplicated, and
self-loops dropped at load time. Graphs without a feature file get a single
constant-1 feature.
"""

from __future__ import annotations

import hashlib
import json
import logging
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import DataError

log = logging.getLogger(__name__)

TASKS = ("multiclass", "multilabel")
SPLIT_NAMES = ("train", "val", "test", "none")


@dataclass
class DatasetManifest:
    """Per-dataset metadata used by the trainer and the sampler."""

    name: str
    path: str
    task: str
    num_classes: int
    num_features: int
    num_nodes: int
    dataset_lr: float | None = None
    role: str = "pretrain"

    def __post_init__(self):
        if self.task not in TASKS:
            raise DataError(f"unknown task {self.task!r}")
        if self.task == "multiclass" and self.num_classes < 2:
            raise DataError(f"multiclass needs >= 2 classes, got {self.num_classes}")
        if self.dataset_lr is not None and self.dataset_lr <= 0:
            raise DataError(f"dataset_lr must be positive, got {self.dataset_lr}")


class Graph:
    """Immutable CSR-form undirected simple graph with features and labels."""

    __slots__ = ("num_nodes", "indptr", "indices", "features", "labels",
                 "num_classes", "task", "train_mask", "val_mask", "test_mask")

    def __init__(self, num_nodes, indptr, indices, features, labels, num_classes,
                 task, train_mask, val_mask, test_mask):
        self.num_nodes = int(num_nodes)
        self.indptr = np.ascontiguousarray(indptr, dtype=np.int64)
        self.indices = np.ascontiguousarray(indices, dtype=np.int64)
        self.features = np.ascontiguousarray(features, dtype=np.float64)
        if task == "multiclass":
            self.labels = np.ascontiguousarray(labels, dtype=np.int64)
        else:
            self.labels = np.ascontiguousarray(labels, dtype=np.int8)
        self.num_classes = int(num_classes)
        self.task = task
        self.train_mask = np.ascontiguousarray(train_mask, dtype=bool)
        self.val_mask = np.ascontiguousarray(val_mask, dtype=bool)
        self.test_mask = np.ascontiguousarray(test_mask, dtype=bool)
        self.validate()

    # -- construction ---------------------------------------------------------

    @classmethod
    def from_edges(cls, num_nodes, edges, features=None, labels=None, num_classes=None,
                   task="multiclass", train_mask=None, val_mask=None, test_mask=None):
        """Build a graph from an edge list, canonicalizing as it goes.

        Returns (graph, stats) where stats counts dropped self-loops and
        duplicate edges.
        """
        num_nodes = int(num_nodes)
        if num_nodes <= 0:
            raise DataError("graph has no nodes")
        edges = np.asarray(edges, dtype=np.int64).reshape(-1, 2)
        if edges.size and (edges.min() < 0 or edges.max() >= num_nodes):
            bad = edges[(edges < 0).any(axis=1) | (edges >= num_nodes).any(axis=1)][0]
            raise DataError(f"edge endpoint {tuple(bad)} outside [0, {num_nodes})")

        self_loops = int((edges[:, 0] == edges[:, 1]).sum()) if edges.size else 0
        edges = edges[edges[:, 0] != edges[:, 1]] if edges.size else edges
        lo = np.minimum(edges[:, 0], edges[:, 1])
        hi = np.maximum(edges[:, 0], edges[:, 1])
        keys = lo * num_nodes + hi
        unique_keys = np.unique(keys)
        duplicates = int(keys.size - unique_keys.size)
        lo, hi = unique_keys // num_nodes, unique_keys % num_nodes

        src = np.concatenate([lo, hi])
        dst = np.concatenate([hi, lo])
        order = np.lexsort((dst, src))
        src, dst = src[order], dst[order]
        indptr = np.zeros(num_nodes + 1, dtype=np.int64)
        np.add.at(indptr, src + 1, 1)
        indptr = np.cumsum(indptr)

        if features is None:
            features = np.ones((num_nodes, 1))
        if labels is None:
            labels = np.zeros(num_nodes, dtype=np.int64)
            num_classes = num_classes or 2
        if num_classes is None:
            num_classes = int(np.max(labels)) + 1 if task == "multiclass" else np.asarray(labels).shape[1]

        def default_mask():
            return np.zeros(num_nodes, dtype=bool)

        graph = cls(num_nodes, indptr, dst, features, labels, num_classes, task,
                    default_mask() if train_mask is None else train_mask,
                    default_mask() if val_mask is None else val_mask,
                    default_mask() if test_mask is None else test_mask)
        stats = {"self_loops_dropped": self_loops, "duplicate_edges": duplicates}
        if self_loops or duplicates:
            log.info("canonicalized graph: dropped %d self-loops, %d duplicate edges",
                     self_loops, duplicates)
        return graph, stats

    # -- views ----------------------------------------------------------------

    @property
    def num_edges(self) -> int:
        """Undirected edge count."""
        return int(self.indices.size // 2)

    def neighbors(self, node: int) -> np.ndarray:
        return self.indices[self.indptr[node]:self.indptr[node + 1]]

    def degrees(self) -> np.ndarray:
        return np.diff(self.indptr)

    def validate(self):
        n = self.num_nodes
        if n <= 0:
            raise DataError("graph has no nodes")
        if self.indptr.shape != (n + 1,) or self.indptr[0] != 0 or self.indptr[-1] != self.indices.size:
            raise DataError("malformed CSR index pointers")
        if self.indices.size and (self.indices.min() < 0 or self.indices.max() >= n):
            raise DataError("CSR column index out of range")
        src = np.repeat(np.arange(n), np.diff(self.indptr))
        if (src == self.indices).any():
            raise DataError("self-loop present")
        same_row = src[1:] == src[:-1]
        if (self.indices[1:][same_row] <= self.indices[:-1][same_row]).any():
            raise DataError("row not strictly sorted (duplicate or unsorted edges)")
        # symmetry: sorted (u, v) keys must equal sorted (v, u) keys
        fwd = np.sort(src * n + self.indices)
        rev = np.sort(self.indices * n + src)
        if not np.array_equal(fwd, rev):
            raise DataError("adjacency not symmetric")
        if self.features.shape[0] != n:
            raise DataError("feature row count mismatch")
        if self.task == "multiclass":
            if self.labels.shape != (n,):
                raise DataError("label count mismatch")
            if self.labels.min() < 0 or self.labels.max() >= self.num_classes:
                raise DataError(f"label outside [0, {self.num_classes})")
        else:
            if self.labels.shape != (n, self.num_classes):
                raise DataError("multilabel matrix shape mismatch")
            if not np.isin(self.labels, (0, 1)).all():
                raise DataError("multilabel entries must be 0 or 1")
        for m in (self.train_mask, self.val_mask, self.test_mask):
            if m.shape != (n,):
                raise DataError("split mask length mismatch")
        overlap = (self.train_mask & self.val_mask) | (self.train_mask & self.test_mask) | (self.val_mask & self.test_mask)
        if overlap.any():
            raise DataError("split masks overlap")

    def content_hash(self) -> str:
        h = hashlib.sha256()
        for arr in (self.indptr, self.indices, self.features, self.labels,
                    self.train_mask, self.val_mask, self.test_mask):
            h.update(arr.tobytes())
        return h.hexdigest()

    def structure_hash(self) -> str:
        """Hash of the adjacency only; keys positional-encoding caches."""
        h = hashlib.sha256()
        h.update(np.int64(self.num_nodes).tobytes())
        h.update(self.indptr.tobytes())
        h.update(self.indices.tobytes())
        return h.hexdigest()


# -- statistics ----------------------------------------------------------------


def homophily_ratio(graph: Graph) -> float:
    """Mean over non-isolated nodes of the same-label fraction of neighbors."""
    if graph.task != "multiclass":
        raise DataError("homophily ratio requires single-label classes")
    deg = graph.degrees()
    active = deg > 0
    if not active.any():
        raise DataError("homophily undefined: all nodes isolated")
    src = np.repeat(np.arange(graph.num_nodes), deg)
    same = (graph.labels[src] == graph.labels[graph.indices]).astype(np.float64)
    per_node = np.zeros(graph.num_nodes)
    np.add.at(per_node, src, same)
    return float((per_node[active] / deg[active]).mean())


def graph_stats(graph: Graph) -> dict:
    """Headline statistics: size, density, homophily, and regime label."""
    stats = {
        "num_nodes": graph.num_nodes,
        "num_edges": graph.num_edges,
        "avg_degree": 2.0 * graph.num_edges / graph.num_nodes,
    }
    if graph.task == "multiclass":
        h = homophily_ratio(graph)
        stats["homophily"] = h
        stats["regime"] = "homophilic" if h >= 0.5 else "heterophilic"
    else:
        stats["homophily"] = None
        stats["regime"] = None
    return stats


# -- directory I/O ---------------------------------------------------------------


def _read_lines(path: Path) -> list[str]:
    with open(path, "r", encoding="utf-8") as fh:
        return [line.rstrip("\n") for line in fh if line.strip()]


def ingest_graph(directory) -> tuple[Graph, DatasetManifest, dict]:
    """Load and canonicalize a dataset directory, returning cleanup stats."""
    directory = Path(directory)
    meta_path = directory / "meta.json"
    if not meta_path.exists():
        raise DataError(f"missing meta.json in {directory}")
    with open(meta_path) as fh:
        meta = json.load(fh)
    for key in ("name", "num_nodes", "num_features", "num_classes", "task"):
        if key not in meta:
            raise DataError(f"meta.json missing field {key!r}")
    n = int(meta["num_nodes"])
    if n <= 0:
        raise DataError("graph has no nodes")
    task = meta["task"]
    if task not in TASKS:
        raise DataError(f"unknown task {task!r}")
    num_classes = int(meta["num_classes"])
    num_features = int(meta["num_features"])

    edges = []
    for i, line in enumerate(_read_lines(directory / "edges.tsv")):
        parts = line.split("\t")
        if len(parts) != 2:
            raise DataError(f"edges.tsv line {i + 1}: expected 'u<TAB>v', got {line!r}")
        try:
            u, v = int(parts[0]), int(parts[1])
        except ValueError as exc:
            raise DataError(f"edges.tsv line {i + 1}: {exc}") from exc
        if not (0 <= u < n and 0 <= v < n):
            raise DataError(f"edges.tsv line {i + 1}: endpoint ({u}, {v}) outside [0, {n})")
        edges.append((u, v))

    feat_path = directory / "features.csv"
    if feat_path.exists():
        features = np.loadtxt(feat_path, delimiter=",", ndmin=2)
        if features.shape != (n, num_features):
            raise DataError(f"features.csv shape {features.shape} != ({n}, {num_features})")
    else:
        if num_features != 1:
            raise DataError("meta declares num_features != 1 but features.csv is absent")
        features = np.ones((n, 1))

    label_lines = _read_lines(directory / "labels.csv")
    if len(label_lines) != n:
        raise DataError(f"labels.csv has {len(label_lines)} lines, expected {n}")
    if task == "multiclass":
        try:
            labels = np.array([int(s) for s in label_lines], dtype=np.int64)
        except ValueError as exc:
            raise DataError(f"labels.csv: {exc}") from exc
        if labels.min() < 0 or labels.max() >= num_classes:
            raise DataError(f"label outside [0, {num_classes})")
    else:
        rows = [line.split(",") for line in label_lines]
        if any(len(r) != num_classes for r in rows):
            raise DataError("multilabel row width mismatch")
        labels = np.array([[int(x) for x in r] for r in rows], dtype=np.int8)
        if not np.isin(labels, (0, 1)).all():
            raise DataError("multilabel entries must be 0 or 1")

    split_lines = _read_lines(directory / "splits.csv")
    if len(split_lines) != n:
        raise DataError(f"splits.csv has {len(split_lines)} lines, expected {n}")
    if any(s not in SPLIT_NAMES for s in split_lines):
        bad = next(s for s in split_lines if s not in SPLIT_NAMES)
        raise DataError(f"unknown split name {bad!r}")
    splits = np.array(split_lines)

    graph, stats = Graph.from_edges(
        n, edges, features=features, labels=labels, num_classes=num_classes, task=task,
        train_mask=splits == "train", val_mask=splits == "val", test_mask=splits == "test",
    )
    manifest = DatasetManifest(
        name=meta["name"], path=str(directory), task=task, num_classes=num_classes,
        num_features=num_features, num_nodes=n,
        dataset_lr=float(meta["dataset_lr"]) if "dataset_lr" in meta and meta["dataset_lr"] is not None else None,
    )
    return graph, manifest, stats


def load_graph(directory) -> Graph:
    """Load a validated graph from a dataset directory."""
    return ingest_graph(directory)[0]


def load_manifest(directory, role="pretrain") -> DatasetManifest:
    directory = Path(directory)
    with open(directory / "meta.json") as fh:
        meta = json.load(fh)
    return DatasetManifest(
        name=meta["name"], path=str(directory), task=meta["task"],
        num_classes=int(meta["num_classes"]), num_features=int(meta["num_features"]),
        num_nodes=int(meta["num_nodes"]),
        dataset_lr=float(meta["dataset_lr"]) if meta.get("dataset_lr") is not None else None,
        role=role,
    )


def save_graph(graph: Graph, name: str, directory, dataset_lr: float | None = None,
               constant_features: bool | None = None) -> Path:
    """Write a graph as a dataset directory in the standard format."""
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    meta = {
        "name": name,
        "num_nodes": graph.num_nodes,
        "num_features": int(graph.features.shape[1]),
        "num_classes": graph.num_classes,
        "task": graph.task,
    }
    if dataset_lr is not None:
        meta["dataset_lr"] = dataset_lr
    with open(directory / "meta.json", "w") as fh:
        json.dump(meta, fh, indent=2)
        fh.write("\n")

    src = np.repeat(np.arange(graph.num_nodes), np.diff(graph.indptr))
    upper = src < graph.indices
    with open(directory / "edges.tsv", "w") as fh:
        for u, v in zip(src[upper], graph.indices[upper]):
            fh.write(f"{u}\t{v}\n")

    if constant_features is None:
        constant_features = graph.features.shape[1] == 1 and (graph.features == 1.0).all()
    if not constant_features:
        np.savetxt(directory / "features.csv", graph.features, delimiter=",", fmt="%.17g")

    with open(directory / "labels.csv", "w") as fh:
        if graph.task == "multiclass":
            for y in graph.labels:
                fh.write(f"{y}\n")
        else:
            for row in graph.labels:
                fh.write(",".join(str(int(x)) for x in row) + "\n")

    split = np.full(graph.num_nodes, "none", dtype=object)
    split[graph.train_mask] = "train"
    split[graph.val_mask] = "val"
    split[graph.test_mask] = "test"
    with open(directory / "splits.csv", "w") as fh:
        fh.write("\n".join(split) + "\n")
    return directory


def discover_corpus(root, role="pretrain") -> list[DatasetManifest]:
    """All dataset directories (those holding meta.json) under ``root``, sorted by name."""
    root = Path(root)
    if not root.exists():
        raise DataError(f"corpus root {root} does not exist")
    manifests = [load_manifest(p.parent, role=role) for p in sorted(root.glob("*/meta.json"))]
    if not manifests:
        raise DataError(f"no datasets found under {root}")
    return manifests
