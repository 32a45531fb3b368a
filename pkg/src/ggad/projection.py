"""Per-graph PCA projection into the shared latent feature space."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np


@dataclass(frozen=True, eq=False)
class FeatureProjector:
    input_dim: int
    output_dim: int
    mean: np.ndarray   # length max(input_dim, output_dim), zero-padded
    basis: np.ndarray  # (max(input_dim, output_dim), output_dim), orthonormal columns

    @property
    def padded_dim(self) -> int:
        return self.basis.shape[0]


def _pad(x: np.ndarray, width: int) -> np.ndarray:
    if x.shape[1] == width:
        return x
    out = np.zeros((x.shape[0], width))
    out[:, :x.shape[1]] = x
    return out


def fit_projection(feature_matrices, output_dim: int = 64, seed: int = 0) -> FeatureProjector:
    """Mean-centred PCA fit on one graph's features.

    ``feature_matrices`` may be a single matrix or a list of matrices that
    share a column count (pooled). Inputs narrower than ``output_dim`` are
    zero-padded first. Component signs are fixed so the largest-magnitude
    loading of each column is positive. ``seed`` is accepted for interface
    stability; the exact SVD used here is deterministic without it.
    """
    del seed
    mats = [feature_matrices] if isinstance(feature_matrices, np.ndarray) else list(feature_matrices)
    if not mats:
        raise ValueError("fit_projection needs at least one feature matrix")
    widths = {m.shape[1] for m in mats}
    if len(widths) != 1:
        raise ValueError(f"pooled matrices must share a feature dimension, got {sorted(widths)}")
    if output_dim < 1:
        raise ValueError("output_dim must be >= 1")
    x = np.vstack([np.asarray(m, dtype=np.float64) for m in mats])
    if output_dim > x.shape[0]:
        raise ValueError(f"output_dim={output_dim} exceeds the number of rows ({x.shape[0]})")
    input_dim = x.shape[1]
    width = max(input_dim, output_dim)
    xp = _pad(x, width)
    mean = xp.mean(axis=0)
    _, _, vt = np.linalg.svd(xp - mean, full_matrices=False)
    basis = vt[:output_dim].T.copy()
    flip = np.sign(basis[np.argmax(np.abs(basis), axis=0), np.arange(output_dim)])
    flip[flip == 0] = 1.0
    basis *= flip
    return FeatureProjector(input_dim, output_dim, mean, basis)


def apply_projection(p: FeatureProjector, features: np.ndarray) -> np.ndarray:
    features = np.asarray(features, dtype=np.float64)
    if features.ndim != 2 or features.shape[1] != p.input_dim:
        raise ValueError(
            f"projector expects {p.input_dim} feature columns, got {features.shape}")
    return (_pad(features, p.padded_dim) - p.mean) @ p.basis


def project_graph_features(features: np.ndarray, output_dim: int = 64) -> np.ndarray:
    """Fit-and-apply on one graph; graphs with fewer rows than ``output_dim``
    get their missing trailing components as zero columns."""
    k = min(output_dim, features.shape[0])
    out = apply_projection(fit_projection(features, k), features)
    if k < output_dim:
        out = np.hstack([out, np.zeros((out.shape[0], output_dim - k))])
    return out
