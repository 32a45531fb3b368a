"""Stochastic-block-model domains and the two standard anomaly injections."""

from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path

import numpy as np
from scipy.linalg import expm

from .graph import Graph, from_edges

DEFAULT_CLIQUE_SIZE = 15
FEATURE_NOISE = 0.5  # within-block feature std before the domain shift


def inject_structural_anomalies(g: Graph, num_cliques: int, clique_size: int, seed: int = 0,
                                exclude=None) -> Graph:
    """Fully connect ``num_cliques`` disjoint random node sets and label them anomalous."""
    n = g.num_nodes
    if num_cliques < 0 or clique_size < 0:
        raise ValueError("clique counts must be non-negative")
    if num_cliques == 0 or clique_size == 0:
        return g
    pool = np.arange(n) if exclude is None else np.setdiff1d(np.arange(n), exclude)
    need = num_cliques * clique_size
    if need > len(pool):
        raise ValueError(f"{num_cliques} cliques of size {clique_size} need {need} nodes, "
                         f"only {len(pool)} available")
    rng = np.random.default_rng(seed)
    chosen = rng.choice(pool, size=need, replace=False).reshape(num_cliques, clique_size)
    new_edges = []
    for members in chosen:
        a, b = np.triu_indices(clique_size, k=1)
        new_edges.append(np.stack([members[a], members[b]], axis=1))
    edges = np.vstack([g.edge_array(), *new_edges])
    labels = np.zeros(n, dtype=np.int64) if g.labels is None else g.labels.copy()
    labels[chosen.ravel()] = 1
    return from_edges(n, edges, g.features, labels, g.name)


def inject_attribute_anomalies(g: Graph, num_targets: int, candidate_pool: int = 50, seed: int = 0,
                               exclude=None) -> Graph:
    """Replace each target's features with the farthest of ``candidate_pool`` random rows."""
    n = g.num_nodes
    if n < 2:
        raise ValueError("attribute injection needs at least 2 nodes")
    if num_targets == 0:
        return g
    if not 1 <= candidate_pool <= n - 1:
        raise ValueError(f"candidate_pool must be in [1, {n - 1}], got {candidate_pool}")
    pool = np.arange(n) if exclude is None else np.setdiff1d(np.arange(n), exclude)
    if num_targets > len(pool):
        raise ValueError(f"num_targets={num_targets} exceeds the {len(pool)} eligible nodes")
    rng = np.random.default_rng(seed)
    targets = rng.choice(pool, size=num_targets, replace=False)
    original = g.features
    feats = original.copy()
    for t in targets:
        cand = rng.choice(n - 1, size=candidate_pool, replace=False)
        cand[cand >= t] += 1
        dist = np.sum((original[cand] - original[t]) ** 2, axis=1)
        feats[t] = original[cand[np.argmax(dist)]]
    labels = np.zeros(n, dtype=np.int64) if g.labels is None else g.labels.copy()
    labels[targets] = 1
    return Graph(n, g.indptr, g.indices, feats, labels, g.name).validate()


def sample_sbm(num_nodes: int, num_blocks: int, p_in: float, p_out: float, rng):
    """Return (edge array, block assignment) of a balanced-block SBM."""
    blocks = rng.permutation(np.arange(num_nodes) % num_blocks)
    parts = []
    for i in range(num_nodes - 1):
        j = np.arange(i + 1, num_nodes)
        p = np.where(blocks[j] == blocks[i], p_in, p_out)
        hit = j[rng.random(len(j)) < p]
        if len(hit):
            parts.append(np.stack([np.full(len(hit), i), hit], axis=1))
    edges = np.vstack(parts) if parts else np.zeros((0, 2), dtype=np.int64)
    return edges, blocks


@dataclass
class SyntheticDomainSpec:
    num_nodes: int = 1000
    num_blocks: int = 4
    intra_block_edge_prob: float = 0.02
    inter_block_edge_prob: float = 0.002
    feature_dim: int = 32
    feature_domain_shift: dict = field(default_factory=lambda: {"scale": 1.0, "rotation": 0.0})
    anomaly_ratio: float = 0.05
    seed: int = 0

    def validate(self) -> SyntheticDomainSpec:
        for p in (self.intra_block_edge_prob, self.inter_block_edge_prob):
            if not 0.0 <= p <= 1.0:
                raise ValueError(f"edge probability {p} outside [0, 1]")
        if not 0.0 < self.anomaly_ratio < 0.5:
            raise ValueError(f"anomaly_ratio must be in (0, 0.5), got {self.anomaly_ratio}")
        if self.num_nodes < 2 or self.num_blocks < 1 or self.feature_dim < 1:
            raise ValueError("num_nodes >= 2, num_blocks >= 1 and feature_dim >= 1 required")
        unknown = set(self.feature_domain_shift) - {"scale", "rotation"}
        if unknown:
            raise ValueError(f"unknown feature_domain_shift keys: {sorted(unknown)}")
        return self

    def to_json(self) -> str:
        return json.dumps(asdict(self), indent=2, sort_keys=True)

    @classmethod
    def from_dict(cls, doc: dict) -> SyntheticDomainSpec:
        names = {f.name for f in fields(cls)}
        unknown = set(doc) - names
        if unknown:
            raise ValueError(f"unknown SyntheticDomainSpec fields: {sorted(unknown)}")
        return cls(**doc).validate()

    @classmethod
    def load(cls, path) -> SyntheticDomainSpec:
        return cls.from_dict(json.loads(Path(path).read_text()))


def _rotation(dim: int, strength: float, rng) -> np.ndarray:
    a = rng.standard_normal((dim, dim))
    skew = (a - a.T) / np.sqrt(2.0 * dim)
    return expm(strength * np.pi * skew)


def anomaly_budget(num_nodes: int, ratio: float) -> tuple[int, int, int]:
    """Split ceil(ratio*N) anomalies into (num_cliques, clique_size, num_attribute)."""
    total = math.ceil(ratio * num_nodes - 1e-9)
    clique_size = min(DEFAULT_CLIQUE_SIZE, total // 2) if total >= 4 else 0
    num_cliques = (total // 2) // clique_size if clique_size else 0
    return num_cliques, clique_size, total - num_cliques * clique_size


def generate_synthetic_domain(spec: SyntheticDomainSpec, name: str = "synthetic") -> Graph:
    spec.validate()
    rng = np.random.default_rng(spec.seed)
    n = spec.num_nodes
    num_cliques, clique_size, num_attr = anomaly_budget(n, spec.anomaly_ratio)
    if num_cliques * clique_size + num_attr > n // 2:
        raise ValueError("anomaly_ratio infeasible for this graph size")
    edges, blocks = sample_sbm(n, spec.num_blocks, spec.intra_block_edge_prob,
                               spec.inter_block_edge_prob, rng)
    means = rng.standard_normal((spec.num_blocks, spec.feature_dim))
    x = means[blocks] + FEATURE_NOISE * rng.standard_normal((n, spec.feature_dim))
    shift = spec.feature_domain_shift
    x = float(shift.get("scale", 1.0)) * (x @ _rotation(spec.feature_dim, float(shift.get("rotation", 0.0)), rng))
    g = from_edges(n, edges, x, np.zeros(n, dtype=np.int64), name)
    sub = rng.integers(0, 2**31, size=2)
    g = inject_structural_anomalies(g, num_cliques, clique_size, int(sub[0]))
    pool = min(50, n - 1)
    return inject_attribute_anomalies(g, num_attr, pool, int(sub[1]), exclude=np.flatnonzero(g.labels))
