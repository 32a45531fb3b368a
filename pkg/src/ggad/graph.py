"""Attributed graph container, text-directory IO and adjacency normalization."""

from __future__ import annotations

import logging
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np
import scipy.sparse as sp

from . import kernels

logger = logging.getLogger(__name__)


class GraphFormatError(ValueError):
    """A graph file could not be parsed; carries the file and line number."""


class GraphValidationError(ValueError):
    """Graph contents violate a structural invariant."""


@dataclass(frozen=True, eq=False)
class Graph:
    """Sparse undirected attributed graph.

    ``indptr``/``indices`` hold the symmetric 0/1 adjacency in CSR form with
    strictly increasing columns per row and no self-loops. ``labels`` is
    optional (1 = anomaly).
    """

    num_nodes: int
    indptr: np.ndarray
    indices: np.ndarray
    features: np.ndarray
    labels: np.ndarray | None = None
    name: str = "graph"

    def __post_init__(self):
        for arr in (self.indptr, self.indices, self.features):
            arr.flags.writeable = False
        if self.labels is not None and isinstance(self.labels, np.ndarray):
            self.labels.flags.writeable = False

    @property
    def num_edges(self) -> int:
        return len(self.indices) // 2

    @property
    def degrees(self) -> np.ndarray:
        return np.diff(self.indptr)

    def edge_array(self) -> np.ndarray:
        """Undirected edges as an (E, 2) array with src < dst."""
        rows = np.repeat(np.arange(self.num_nodes), self.degrees)
        keep = rows < self.indices
        return np.stack([rows[keep], self.indices[keep]], axis=1)

    def to_scipy(self) -> sp.csr_matrix:
        data = np.ones(len(self.indices))
        return sp.csr_matrix((data, self.indices, self.indptr), shape=(self.num_nodes,) * 2)

    def with_labels(self, labels) -> Graph:
        return replace(self, labels=None if labels is None else np.asarray(labels, dtype=np.int64).copy())

    def validate(self) -> Graph:
        n = self.num_nodes
        if self.indptr.shape != (n + 1,) or self.indptr[0] != 0 or self.indptr[-1] != len(self.indices):
            raise GraphValidationError("malformed CSR row offsets")
        if np.any(np.diff(self.indptr) < 0):
            raise GraphValidationError("CSR row offsets must be non-decreasing")
        if len(self.indices) and (self.indices.min() < 0 or self.indices.max() >= n):
            raise GraphValidationError("column index out of range")
        rows = np.repeat(np.arange(n), self.degrees)
        if np.any(rows == self.indices):
            raise GraphValidationError("self-loops must not be stored")
        same_row = rows[1:] == rows[:-1]
        if np.any(np.diff(self.indices)[same_row] <= 0):
            raise GraphValidationError("column indices must be strictly increasing within a row")
        a = self.to_scipy()
        if (a != a.T).nnz:
            raise GraphValidationError("adjacency is not symmetric")
        if self.features.ndim != 2 or self.features.shape[0] != n:
            raise GraphValidationError(
                f"features must have {n} rows, got shape {self.features.shape}")
        if not np.all(np.isfinite(self.features)):
            raise GraphValidationError("features contain non-finite values")
        if self.labels is not None:
            if self.labels.shape != (n,):
                raise GraphValidationError(f"labels must have {n} entries, got {self.labels.shape[0]}")
            if not np.all((self.labels == 0) | (self.labels == 1)):
                raise GraphValidationError("labels must be 0/1")
        return self


def from_edges(num_nodes: int, edges, features, labels=None, name: str = "graph") -> Graph:
    """Build a validated Graph from an edge list; duplicates/reversals merge, self-loops drop."""
    edges = np.asarray(edges, dtype=np.int64).reshape(-1, 2)
    if len(edges) and (edges.min() < 0 or edges.max() >= num_nodes):
        bad = int(edges.max()) if edges.max() >= num_nodes else int(edges.min())
        raise GraphValidationError(f"edge references node {bad} but graph has {num_nodes} nodes")
    edges = edges[edges[:, 0] != edges[:, 1]]
    src = np.concatenate([edges[:, 0], edges[:, 1]])
    dst = np.concatenate([edges[:, 1], edges[:, 0]])
    a = sp.csr_matrix((np.ones(len(src)), (src, dst)), shape=(num_nodes, num_nodes))
    a.sum_duplicates()
    a.sort_indices()
    features = np.array(features, dtype=np.float64, copy=True)
    if features.ndim == 1:
        features = features.reshape(-1, 1)
    lab = None if labels is None else np.asarray(labels, dtype=np.int64).copy()
    g = Graph(num_nodes, a.indptr.astype(np.int64), a.indices.astype(np.int64), features, lab, name)
    return g.validate()


# ---------------------------------------------------------------------------
# directory format: edges.tsv, features.csv, labels.csv (optional)


def _read_edges(path: Path) -> list[tuple[int, int]]:
    edges = []
    with open(path) as fh:
        for lineno, line in enumerate(fh, 1):
            s = line.strip()
            if not s:
                continue
            parts = s.split()
            if len(parts) != 2:
                raise GraphFormatError(f"{path}:{lineno}: expected two node indices, got {s!r}")
            try:
                edges.append((int(parts[0]), int(parts[1])))
            except ValueError:
                raise GraphFormatError(f"{path}:{lineno}: non-integer node index in {s!r}") from None
    return edges


def _read_features(path: Path) -> np.ndarray:
    rows = []
    with open(path) as fh:
        for lineno, line in enumerate(fh, 1):
            s = line.strip()
            if not s:
                continue
            try:
                rows.append([float(v) for v in s.split(",")])
            except ValueError:
                raise GraphFormatError(f"{path}:{lineno}: non-numeric feature value") from None
            if len(rows[-1]) != len(rows[0]):
                raise GraphFormatError(
                    f"{path}:{lineno}: expected {len(rows[0])} columns, got {len(rows[-1])}")
    if not rows:
        raise GraphFormatError(f"{path}: no feature rows")
    return np.array(rows, dtype=np.float64)


def _read_labels(path: Path) -> np.ndarray:
    labels = []
    with open(path) as fh:
        for lineno, line in enumerate(fh, 1):
            s = line.strip()
            if not s:
                continue
            if s not in ("0", "1"):
                raise GraphFormatError(f"{path}:{lineno}: label must be 0 or 1, got {s!r}")
            labels.append(int(s))
    return np.array(labels, dtype=np.int64)


def load_graph(dir_path, name: str | None = None) -> Graph:
    """Load a graph directory (edges.tsv, features.csv, optional labels.csv)."""
    d = Path(dir_path)
    for req in ("edges.tsv", "features.csv"):
        if not (d / req).is_file():
            raise FileNotFoundError(f"missing {d / req}")
    features = _read_features(d / "features.csv")
    n = features.shape[0]
    edges = _read_edges(d / "edges.tsv")
    loops = sum(1 for a, b in edges if a == b)
    if loops:
        logger.warning("%s: dropped %d self-loop line(s)", d / "edges.tsv", loops)
    labels = None
    if (d / "labels.csv").is_file():
        labels = _read_labels(d / "labels.csv")
        if len(labels) != n:
            raise GraphValidationError(
                f"{d / 'labels.csv'} has {len(labels)} rows but features.csv has {n}")
    return from_edges(n, edges, features, labels, name or d.name)


def save_graph(g: Graph, dir_path) -> None:
    d = Path(dir_path)
    d.mkdir(parents=True, exist_ok=True)
    with open(d / "edges.tsv", "w") as fh:
        for a, b in g.edge_array():
            fh.write(f"{a}\t{b}\n")
    with open(d / "features.csv", "w") as fh:
        for row in g.features:
            fh.write(",".join(repr(float(v)) for v in row) + "\n")
    if g.labels is not None:
        with open(d / "labels.csv", "w") as fh:
            fh.writelines(f"{int(v)}\n" for v in g.labels)


# ---------------------------------------------------------------------------


@dataclass(frozen=True, eq=False)
class NormalizedAdjacency:
    """D^-1/2 M D^-1/2 in CSR form, M = A (+ I when ``with_self_loops``)."""

    indptr: np.ndarray
    indices: np.ndarray
    data: np.ndarray
    with_self_loops: bool
    shape: tuple[int, int] = field(default=(0, 0))

    def to_dense(self) -> np.ndarray:
        return sp.csr_matrix((self.data, self.indices, self.indptr), shape=self.shape).toarray()


def symmetric_normalize(g: Graph, add_self_loops: bool) -> NormalizedAdjacency:
    n = g.num_nodes
    a = g.to_scipy()
    if add_self_loops:
        a = (a + sp.identity(n, format="csr")).tocsr()
        a.sort_indices()
    deg = np.asarray(a.sum(axis=1)).ravel()
    inv = np.zeros(n)
    nz = deg > 0
    inv[nz] = 1.0 / np.sqrt(deg[nz])
    rows = np.repeat(np.arange(n), np.diff(a.indptr))
    data = inv[rows] * inv[a.indices]
    return NormalizedAdjacency(a.indptr.astype(np.int64), a.indices.astype(np.int64), data,
                               add_self_loops, (n, n))


def spmm(adj: NormalizedAdjacency, x: np.ndarray) -> np.ndarray:
    """Exact sparse-dense product ``adj @ x``."""
    x = np.asarray(x, dtype=np.float64)
    if x.ndim != 2 or x.shape[0] != adj.shape[1]:
        raise ValueError(f"spmm shape mismatch: adjacency {adj.shape} vs dense {x.shape}")
    return kernels.spmm(adj.indptr, adj.indices, adj.data, x)


def neighbor_sum(g: Graph, x: np.ndarray) -> np.ndarray:
    """Unweighted sum of neighbor rows, ``A @ x``."""
    return kernels.spmm(g.indptr, g.indices, np.ones(len(g.indices)), x)
