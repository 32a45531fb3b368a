"""Multi-hop propagation, residual embeddings and the residual channel.

Forward pass, per hop k = 1..l with H0 = X and self-looped normalized
adjacency A:

    H_k = relu(A @ H_{k-1} @ W_k)
    R   = [H_2 - H_1 | H_3 - H_1 | ... | H_l - H_1]

Gradients are written out by hand for this fixed architecture.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np

from . import kernels
from .graph import NormalizedAdjacency, spmm
from .optim import OptimizerState, ParamStore, adam_step, init_params
from .scores import ScoreVector

logger = logging.getLogger(__name__)

MAX_PAIRS = 1_000_000


@dataclass(eq=False)
class HighOrderEncoder:
    weights: list[np.ndarray]
    margin: float = 0.1

    def __post_init__(self):
        if len(self.weights) < 2:
            raise ValueError("at least two hops are needed to form residuals")
        for a, b in zip(self.weights[:-1], self.weights[1:]):
            if a.shape[1] != b.shape[0]:
                raise ValueError("hop weights do not compose")

    @property
    def num_hops(self) -> int:
        return len(self.weights)

    @property
    def input_dim(self) -> int:
        return self.weights[0].shape[0]

    @property
    def hidden_dim(self) -> int:
        return self.weights[-1].shape[1]

    @staticmethod
    def param_shapes(input_dim, hidden_dim=64, num_hops=4, prefix="high."):
        dims = [input_dim] + [hidden_dim] * num_hops
        return [(f"{prefix}W{k + 1}", dims[k], dims[k + 1]) for k in range(num_hops)]

    @classmethod
    def from_store(cls, store: ParamStore, num_hops: int, margin=0.1, prefix="high."):
        return cls([store[f"{prefix}W{k + 1}"] for k in range(num_hops)], margin)

    @classmethod
    def init(cls, input_dim, hidden_dim=64, num_hops=4, margin=0.1, seed=0):
        store = init_params(cls.param_shapes(input_dim, hidden_dim, num_hops), seed)
        return cls.from_store(store, num_hops, margin)


@dataclass
class _Forward:
    hs: list          # H_1..H_l
    props: list       # A @ H_{k-1}
    pres: list        # pre-activations


def _forward(enc: HighOrderEncoder, adj: NormalizedAdjacency, x: np.ndarray) -> _Forward:
    if not adj.with_self_loops:
        raise ValueError("high-order propagation expects a self-looped adjacency")
    if x.shape[1] != enc.input_dim:
        raise ValueError(f"features have {x.shape[1]} columns, encoder expects {enc.input_dim}")
    h = np.asarray(x, dtype=np.float64)
    hs, props, pres = [], [], []
    for w in enc.weights:
        p = spmm(adj, h)
        z = p @ w
        h = np.maximum(z, 0.0)
        props.append(p)
        pres.append(z)
        hs.append(h)
    return _Forward(hs, props, pres)


def propagate(enc: HighOrderEncoder, adj: NormalizedAdjacency, x: np.ndarray) -> list[np.ndarray]:
    return _forward(enc, adj, x).hs


def residual_embed(hs) -> np.ndarray:
    if len(hs) < 2:
        raise ValueError("residuals need at least two hops")
    return np.hstack([h - hs[0] for h in hs[1:]])


@dataclass
class ContrastiveResult:
    loss: float
    grad: np.ndarray                # dL/dR, same shape as R
    zero_rows: int = 0
    skipped_pairs: int = 0
    sampled: bool = False
    hinge_margin_gap: np.ndarray = field(default_factory=lambda: np.zeros(0))


def _unit_rows(r):
    norms = np.linalg.norm(r, axis=1)
    ok = norms > 0
    u = np.zeros_like(r)
    u[ok] = r[ok] / norms[ok, None]
    return u, norms, ok


def contrastive_loss(r: np.ndarray, normal_idx, anomaly_idx, margin: float = 0.1,
                     max_pairs: int = MAX_PAIRS, rng=None) -> ContrastiveResult:
    """Residual contrastive loss and its gradient with respect to ``r``.

    Normal-normal term: sum over ordered pairs of (1 - cos). It equals
    n^2 - |sum of unit rows|^2, so it is evaluated exactly in O(n).
    Normal-anomaly term: sum of hinge(cos - margin); above ``max_pairs``
    pairs a seeded uniform subsample is drawn and rescaled to the full count.
    Rows with zero norm have no defined cosine and are left out.
    """
    normal_idx = np.asarray(normal_idx, dtype=np.int64)
    anomaly_idx = np.asarray(anomaly_idx, dtype=np.int64)
    if len(normal_idx) == 0:
        raise ValueError("contrastive loss needs at least one normal node")
    if np.intersect1d(normal_idx, anomaly_idx).size:
        raise ValueError("normal and anomaly index sets overlap")
    u, norms, ok = _unit_rows(r)
    pos = normal_idx[ok[normal_idx]]
    neg = anomaly_idx[ok[anomaly_idx]]
    zero_rows = int((~ok[normal_idx]).sum() + (~ok[anomaly_idx]).sum())
    skipped = len(normal_idx) ** 2 - len(pos) ** 2 + len(normal_idx) * len(anomaly_idx) - len(pos) * len(neg)

    gu = np.zeros_like(r)
    s = u[pos].sum(axis=0)
    loss = float(len(pos) ** 2 - s @ s)
    gu[pos] -= 2.0 * s

    gap = np.zeros(0)
    sampled = False
    if len(pos) and len(neg):
        total = len(pos) * len(neg)
        if total <= max_pairs:
            c = u[pos] @ u[neg].T
            gap = (c - margin).ravel()
            act = (c > margin).astype(np.float64)
            loss += float(np.sum(np.maximum(c - margin, 0.0)))
            gu[pos] += act @ u[neg]
            gu[neg] += act.T @ u[pos]
        else:
            sampled = True
            rng = rng if rng is not None else np.random.default_rng(0)
            t = pos[rng.integers(0, len(pos), size=max_pairs)]
            j = neg[rng.integers(0, len(neg), size=max_pairs)]
            c = np.einsum("ij,ij->i", u[t], u[j])
            gap = c - margin
            scale = total / max_pairs
            act = (c > margin) * scale
            loss += float(scale * np.sum(np.maximum(c - margin, 0.0)))
            np.add.at(gu, t, act[:, None] * u[j])
            np.add.at(gu, j, act[:, None] * u[t])

    grad = np.zeros_like(r)
    radial = np.einsum("ij,ij->i", gu[ok], u[ok])
    grad[ok] = (gu[ok] - radial[:, None] * u[ok]) / norms[ok, None]
    return ContrastiveResult(loss, grad, zero_rows, int(skipped), sampled, gap)


def _backward(enc: HighOrderEncoder, adj: NormalizedAdjacency, x, fwd: _Forward, grad_r):
    l, d = enc.num_hops, enc.hidden_dim
    g_h = [np.zeros_like(h) for h in fwd.hs]
    for k in range(1, l):
        blk = grad_r[:, (k - 1) * d:k * d]
        g_h[k] += blk
        g_h[0] -= blk
    grads = [None] * l
    for k in range(l - 1, -1, -1):
        gz = g_h[k] * (fwd.pres[k] > 0)
        grads[k] = fwd.props[k].T @ gz
        if k > 0:
            g_h[k - 1] += spmm(adj, gz @ enc.weights[k].T)
    return grads


def high_order_loss(enc: HighOrderEncoder, adj: NormalizedAdjacency, x, normal_idx, anomaly_idx,
                    rng=None, max_pairs: int = MAX_PAIRS):
    """Returns (loss, [dL/dW_k], ContrastiveResult)."""
    fwd = _forward(enc, adj, x)
    r = residual_embed(fwd.hs)
    res = contrastive_loss(r, normal_idx, anomaly_idx, enc.margin, max_pairs, rng)
    return res.loss, _backward(enc, adj, x, fwd, res.grad), res


def kink_pattern(enc: HighOrderEncoder, adj, x, normal_idx, anomaly_idx):
    """Activation pattern and kink distances (ReLU inputs, hinge gaps) for gradient checks."""
    fwd = _forward(enc, adj, x)
    res = contrastive_loss(residual_embed(fwd.hs), normal_idx, anomaly_idx, enc.margin)
    pre = np.concatenate([z.ravel() for z in fwd.pres] + [res.hinge_margin_gap])
    return pre > 0, pre


def residual_score(r: np.ndarray, n_k: int = 256, seed: int = 0) -> ScoreVector:
    """Mean squared distance of every residual row to one shared random sample of rows."""
    r = np.asarray(r, dtype=np.float64)
    n = r.shape[0]
    if n < 2:
        raise ValueError("residual score needs at least two nodes")
    if n_k < 1:
        raise ValueError("n_k must be >= 1")
    m = min(n_k, n)
    idx = np.sort(np.random.default_rng(seed).choice(n, size=m, replace=False))
    vals = kernels.mean_sq_dist(r, r[idx])
    return ScoreVector(vals, "residual", False, {"n_k": m})


def train_high_order(enc: HighOrderEncoder, sources, epochs: int, opt: OptimizerState | None = None,
                     seed: int = 0):
    """Fit the hop weights on labeled sources with the contrastive loss alone.

    ``sources`` holds (adjacency with self-loops, projected features, labels)
    triples. Returns (encoder, per-epoch loss history summed over sources).
    The joint objective used for full training lives in ``pipeline.train``.
    """
    store = ParamStore({f"W{k + 1}": w for k, w in enumerate(enc.weights)})
    opt = opt or OptimizerState()
    rng = np.random.default_rng(seed)
    history = []
    for _ in range(epochs):
        total = 0.0
        for adj, x, y in sources:
            loss, grads, _ = high_order_loss(enc, adj, x, np.flatnonzero(y == 0),
                                             np.flatnonzero(y == 1), rng)
            if not np.isfinite(loss):
                raise FloatingPointError("non-finite high-order loss")
            store.accumulate({f"W{k + 1}": g for k, g in enumerate(grads)})
            adam_step(store, opt)
            total += loss
        history.append(total)
    return enc, history
