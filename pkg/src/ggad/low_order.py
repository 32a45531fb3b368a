"""Affinity encoders (one GCN layer, bottleneck MLP) and the affinity channel."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .graph import Graph, NormalizedAdjacency, neighbor_sum, spmm
from .optim import ParamStore, init_params
from .scores import ScoreVector


@dataclass(eq=False)
class AffinityEncoder:
    W: np.ndarray    # input -> hidden (GCN branch)
    W1: np.ndarray   # input -> bottleneck
    W2: np.ndarray   # bottleneck -> hidden

    def __post_init__(self):
        if self.W1.shape[1] != self.W2.shape[0] or self.W.shape[0] != self.W1.shape[0]:
            raise ValueError("affinity encoder weights do not compose")
        if self.W.shape[1] != self.W2.shape[1]:
            raise ValueError("both branches must share the hidden width")

    @property
    def input_dim(self) -> int:
        return self.W.shape[0]

    @property
    def hidden_dim(self) -> int:
        return self.W.shape[1]

    @property
    def bottleneck_dim(self) -> int:
        return self.W1.shape[1]

    @staticmethod
    def param_shapes(input_dim, hidden_dim=64, bottleneck_dim=32, prefix="low."):
        return [(f"{prefix}W", input_dim, hidden_dim),
                (f"{prefix}W1", input_dim, bottleneck_dim),
                (f"{prefix}W2", bottleneck_dim, hidden_dim)]

    @classmethod
    def from_store(cls, store: ParamStore, prefix="low."):
        return cls(store[f"{prefix}W"], store[f"{prefix}W1"], store[f"{prefix}W2"])

    @classmethod
    def init(cls, input_dim, hidden_dim=64, bottleneck_dim=32, seed=0):
        return cls.from_store(init_params(cls.param_shapes(input_dim, hidden_dim, bottleneck_dim), seed))


def _check_input(enc, x):
    if x.ndim != 2 or x.shape[1] != enc.input_dim:
        raise ValueError(f"features have shape {x.shape}, encoder expects {enc.input_dim} columns")


def encode_gcn(enc: AffinityEncoder, adj: NormalizedAdjacency, x) -> np.ndarray:
    _check_input(enc, x)
    return np.maximum(spmm(adj, x) @ enc.W, 0.0)


def encode_mlp(enc: AffinityEncoder, x) -> np.ndarray:
    """relu((x W1) W2): two linear maps, one outer nonlinearity."""
    _check_input(enc, x)
    return np.maximum((x @ enc.W1) @ enc.W2, 0.0)


def _unit_rows(h):
    norms = np.linalg.norm(h, axis=1)
    ok = norms > 0
    u = np.zeros_like(h)
    u[ok] = h[ok] / norms[ok, None]
    return u, norms, ok


def affinity_score(h_bar, h_hat, g: Graph) -> ScoreVector:
    """Mean over neighbours of cos(h_bar) + cos(h_hat); range [-2, 2].

    Isolated nodes take the mean of the defined scores (0 if none are
    defined); zero-norm rows contribute zero cosine.
    """
    if h_bar.shape[0] != g.num_nodes or h_hat.shape[0] != g.num_nodes:
        raise ValueError("embeddings are not row-aligned with the graph")
    ub, _, okb = _unit_rows(np.asarray(h_bar, dtype=np.float64))
    uh, _, okh = _unit_rows(np.asarray(h_hat, dtype=np.float64))
    deg = g.degrees
    total = (np.einsum("ij,ij->i", ub, neighbor_sum(g, ub))
             + np.einsum("ij,ij->i", uh, neighbor_sum(g, uh)))
    has = deg > 0
    vals = np.zeros(g.num_nodes)
    vals[has] = total[has] / deg[has]
    fill = float(vals[has].mean()) if has.any() else 0.0
    vals[~has] = fill
    diag = {"isolated": int((~has).sum()), "isolated_fill": fill,
            "zero_norm_rows": int((~okb).sum() + (~okh).sum())}
    return ScoreVector(vals, "affinity", False, diag)


def affinity_loss(enc: AffinityEncoder, adj: NormalizedAdjacency, g: Graph, x):
    """Negative summed affinity and its gradient for (W, W1, W2).

    Isolated nodes hold a mean-filled score with no gradient path, so they
    are left out of the sum. Returns (loss, {"W", "W1", "W2"}, ScoreVector).
    """
    _check_input(enc, x)
    p = spmm(adj, x)
    zg = p @ enc.W
    t = x @ enc.W1
    zm = t @ enc.W2
    hb, hh = np.maximum(zg, 0.0), np.maximum(zm, 0.0)
    score = affinity_score(hb, hh, g)
    deg = g.degrees.astype(np.float64)
    loss = -float(score.values[deg > 0].sum())

    inv = np.zeros_like(deg)
    inv[deg > 0] = 1.0 / deg[deg > 0]

    def branch_grad(h):
        u, norms, ok = _unit_rows(h)
        gu = -(neighbor_sum(g, u * inv[:, None]) + neighbor_sum(g, u) * inv[:, None])
        gh = np.zeros_like(h)
        radial = np.einsum("ij,ij->i", gu[ok], u[ok])
        gh[ok] = (gu[ok] - radial[:, None] * u[ok]) / norms[ok, None]
        return gh

    gzg = branch_grad(hb) * (zg > 0)
    gzm = branch_grad(hh) * (zm > 0)
    grads = {"W": p.T @ gzg, "W2": t.T @ gzm, "W1": x.T @ (gzm @ enc.W2.T)}
    return loss, grads, score


def kink_pattern(enc: AffinityEncoder, adj, x):
    pre = np.concatenate([(spmm(adj, x) @ enc.W).ravel(), ((x @ enc.W1) @ enc.W2).ravel()])
    return pre > 0, pre
