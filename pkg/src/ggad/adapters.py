"""Disassortativity-weighted channel fusion and the test-time score adapter."""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .scores import ScoreVector

PROB_CLAMP = 1e-6


@dataclass
class FusionWeights:
    w_nd: float
    w_sd: float
    tau: float = 1.0
    eps_stab: float = 1e-6
    normalized: bool = True


def ada_weights(nd: float, sd: float, tau: float = 1.0, eps_stab: float = 1e-6,
                normalize: bool = True) -> FusionWeights:
    """Inverse-power weights 1 / (d + eps) ** tau; the better-aligned channel gets more."""
    for name, v in (("nd", nd), ("sd", sd)):
        if not 0.0 <= v <= 1.0 + 1e-6:
            raise ValueError(f"{name}={v} outside [0, 1]")
    w_nd = 1.0 / (nd + eps_stab) ** tau
    w_sd = 1.0 / (sd + eps_stab) ** tau
    if normalize:
        total = w_nd + w_sd
        w_nd, w_sd = w_nd / total, w_sd / total
    return FusionWeights(w_nd, w_sd, tau, eps_stab, normalize)


def fuse_scores(rs, as_, w: FusionWeights) -> ScoreVector:
    """w_nd * rs + w_sd * (1 - as_), both channels already min-max normalized."""
    rs = np.asarray(rs, dtype=np.float64)
    as_ = np.asarray(as_, dtype=np.float64)
    if rs.shape != as_.shape:
        raise ValueError(f"channel lengths differ: {rs.shape} vs {as_.shape}")
    return ScoreVector(w.w_nd * rs + w.w_sd * (1.0 - as_), "fused", True)


def top_m_count(n: int, ratio: float) -> int:
    return max(1, math.ceil(ratio * n - 1e-9))


def pseudo_labels_topM(scores, anomaly_ratio: float) -> np.ndarray:
    """Label the ceil(ratio * N) highest scores 1; ties go to the lower node index."""
    s = np.asarray(scores, dtype=np.float64)
    if not 0.0 < anomaly_ratio < 1.0:
        raise ValueError(f"anomaly_ratio must be in (0, 1), got {anomaly_ratio}")
    m = top_m_count(len(s), anomaly_ratio)
    order = np.argsort(-s, kind="stable")
    labels = np.zeros(len(s), dtype=np.int64)
    labels[order[:m]] = 1
    return labels


def vote_labels(channel_labels, k_vote: int) -> np.ndarray:
    """1 where at least ``k_vote`` channels agree on a pseudo-anomaly."""
    if len(channel_labels) == 0:
        raise ValueError("no channels to vote over")
    stack = np.vstack([np.asarray(c, dtype=np.int64) for c in channel_labels])
    if not 1 <= k_vote <= stack.shape[0]:
        raise ValueError(f"k_vote must be in [1, {stack.shape[0]}] (number of channels), got {k_vote}")
    return (stack.sum(axis=0) >= k_vote).astype(np.int64)


@dataclass
class PseudoLabels:
    channel_labels: list[np.ndarray]
    voted: np.ndarray
    m: list[int]
    k_vote: int


def make_pseudo_labels(channels, anomaly_ratio: float, k_vote: int) -> PseudoLabels:
    labs = [pseudo_labels_topM(c, anomaly_ratio) for c in channels]
    return PseudoLabels(labs, vote_labels(labs, k_vote), [int(l.sum()) for l in labs], k_vote)


def _softmax(z):
    e = np.exp(z - z.max())
    return e / e.sum()


@dataclass
class ReliabilityWeights:
    logits: np.ndarray
    weights: np.ndarray
    diagnostics: dict = field(default_factory=dict)

    @classmethod
    def from_logits(cls, logits, **diag):
        logits = np.asarray(logits, dtype=np.float64)
        return cls(logits, _softmax(logits), dict(diag))


def _bce_and_grad(logits, s, y):
    w = _softmax(logits)
    raw = s @ w
    p = np.clip(raw, PROB_CLAMP, 1.0 - PROB_CLAMP)
    loss = -np.mean(y * np.log(p) + (1 - y) * np.log(1 - p))
    dp = (p - y) / (p * (1 - p)) / len(y)
    dp[(raw < PROB_CLAMP) | (raw > 1.0 - PROB_CLAMP)] = 0.0
    dw = s.T @ dp
    return loss, w * (dw - w @ dw)


def tsa_fit(channel_scores, voted, steps: int = 200, lr: float = 0.1,
            seed: int = 0) -> ReliabilityWeights:
    """Fit simplex reliability weights by cross-entropy against pseudo-labels.

    Weights are a softmax over logits that start at zero (uniform) and take
    ``steps`` plain gradient steps over all nodes, so the fit is
    deterministic; ``seed`` is kept for interface symmetry.
    """
    del seed
    s = np.asarray(channel_scores, dtype=np.float64)
    if s.ndim == 1:
        s = s[:, None]
    y = np.asarray(voted, dtype=np.float64)
    if s.shape[0] != len(y):
        raise ValueError("channel scores and labels differ in length")
    k = s.shape[1]
    if y.min() == y.max():
        return ReliabilityWeights.from_logits(np.zeros(k), single_class=True, steps=0)
    logits = np.zeros(k)
    losses = []
    for _ in range(steps):
        loss, g = _bce_and_grad(logits, s, y)
        losses.append(float(loss))
        logits -= lr * g
        w = _softmax(logits)
        assert np.all(w >= 0) and abs(w.sum() - 1.0) < 1e-12
    return ReliabilityWeights.from_logits(logits, single_class=False, steps=steps,
                                          initial_loss=losses[0] if losses else None,
                                          final_loss=losses[-1] if losses else None)


def tsa_score(channel_scores, w: ReliabilityWeights) -> ScoreVector:
    s = np.asarray(channel_scores, dtype=np.float64)
    if s.ndim == 1:
        s = s[:, None]
    if s.shape[1] != len(w.weights):
        raise ValueError(f"{s.shape[1]} channels but {len(w.weights)} weights")
    return ScoreVector(s @ w.weights, "final", True)
