"""Gaussian KDE, Jensen-Shannon distance and the node/structure disassortativity metrics."""

from __future__ import annotations

from dataclasses import asdict, dataclass

import numpy as np

from . import kernels

GRID_SIZE = 512
BANDWIDTH_FLOOR = 1e-3
DENSITY_FLOOR = 1e-12
AD_STAR_SMOOTHING = 0.01


def silverman_bandwidth(samples) -> float:
    x = np.asarray(samples, dtype=np.float64)
    q75, q25 = np.percentile(x, [75, 25])
    spread = min(np.std(x), (q75 - q25) / 1.34)
    return max(0.9 * spread * len(x) ** (-0.2), BANDWIDTH_FLOOR)


def make_grid(sample_sets, bandwidths, size: int = GRID_SIZE) -> np.ndarray:
    """Evenly spaced grid covering [min - 3h, max + 3h] of the union of ``sample_sets``."""
    lo = min(float(np.min(s)) for s in sample_sets)
    hi = max(float(np.max(s)) for s in sample_sets)
    h = max(bandwidths)
    return np.linspace(lo - 3.0 * h, hi + 3.0 * h, size)


@dataclass(eq=False)
class KdeDensity:
    samples: np.ndarray
    bandwidth: float
    grid: np.ndarray
    densities: np.ndarray
    raw_mass: float  # trapezoid mass before renormalisation

    def integral(self) -> float:
        return float(np.trapezoid(self.densities, self.grid))


def kde_fit(samples, grid_hint=None, bandwidth: float | None = None,
            grid_size: int = GRID_SIZE) -> KdeDensity:
    """Gaussian KDE evaluated on a grid.

    ``grid_hint`` is either a ready grid array or a (lo, hi) range to be
    spanned with ``grid_size`` points. The evaluated densities are rescaled to
    unit trapezoid mass so grid coarseness cannot break the JS bounds.
    """
    x = np.asarray(samples, dtype=np.float64).ravel()
    if x.size < 2:
        raise ValueError("KDE needs at least two samples")
    if not np.all(np.isfinite(x)):
        raise ValueError("KDE samples must be finite")
    h = silverman_bandwidth(x) if bandwidth is None else float(bandwidth)
    if grid_hint is None:
        grid = make_grid([x], [h], grid_size)
    else:
        grid_hint = np.asarray(grid_hint, dtype=np.float64)
        grid = grid_hint if grid_hint.size > 2 else np.linspace(grid_hint[0], grid_hint[1], grid_size)
    dens = kernels.kde_eval(x, grid, h)
    mass = float(np.trapezoid(dens, grid))
    if not mass > 0:
        raise FloatingPointError("KDE has no mass on the evaluation grid")
    return KdeDensity(x, h, grid, dens / mass, mass)


def js_distance(p: KdeDensity, q: KdeDensity) -> float:
    """Square root of the base-2 Jensen-Shannon divergence, trapezoid quadrature."""
    if p.grid.shape != q.grid.shape or not np.array_equal(p.grid, q.grid):
        raise ValueError("densities must share one evaluation grid")
    pd = np.maximum(p.densities, DENSITY_FLOOR)
    qd = np.maximum(q.densities, DENSITY_FLOOR)
    m = 0.5 * (pd + qd)
    kl_p = np.trapezoid(pd * np.log2(pd / m), p.grid)
    kl_q = np.trapezoid(qd * np.log2(qd / m), p.grid)
    return float(np.sqrt(max(0.5 * kl_p + 0.5 * kl_q, 0.0)))


def paired_kdes(a, b, grid_size: int = GRID_SIZE) -> tuple[KdeDensity, KdeDensity]:
    """Fit both sample sets on one shared grid."""
    a = np.asarray(a, dtype=np.float64).ravel()
    b = np.asarray(b, dtype=np.float64).ravel()
    ha, hb = silverman_bandwidth(a), silverman_bandwidth(b)
    grid = make_grid([a, b], [ha, hb], grid_size)
    return kde_fit(a, grid, ha), kde_fit(b, grid, hb)


def score_distance(source_scores, target_scores) -> tuple[float, float, float]:
    """(JS distance, source bandwidth, target bandwidth) between two score samples."""
    p, q = paired_kdes(source_scores, target_scores)
    return js_distance(p, q), p.bandwidth, q.bandwidth


def node_disassort(source_node_scores, target_node_scores) -> float:
    return score_distance(source_node_scores, target_node_scores)[0]


def struct_disassort(source_struct_scores, target_struct_scores) -> float:
    return score_distance(source_struct_scores, target_struct_scores)[0]


def anomaly_disassort(nd: float, sd: float) -> float:
    """|nd - sd| ** (1 + (nd + sd) / 2), with 0 ** e = 0."""
    for name, v in (("nd", nd), ("sd", sd)):
        if not 0.0 <= v <= 1.0:
            raise ValueError(f"{name}={v} outside [0, 1]")
    base = abs(nd - sd)
    if base == 0.0:
        return 0.0
    return base ** (1.0 + (nd + sd) / 2.0)


def ad_star(ads, delta: float = AD_STAR_SMOOTHING) -> list[tuple[str, float]]:
    """Smoothed min-max normalisation (ad - min + delta) / (max - min + 2 delta)."""
    ads = list(ads)
    if len(ads) < 2:
        raise ValueError("ad_star needs at least two domains")
    vals = np.array([a for _, a in ads], dtype=np.float64)
    lo, hi = vals.min(), vals.max()
    if hi == lo:
        return [(name, 0.5) for name, _ in ads]
    return [(name, float((a - lo + delta) / (hi - lo + 2 * delta))) for name, a in ads]


@dataclass
class DisassortReport:
    nd: float
    sd: float
    ad: float
    h_node_source: float
    h_node_target: float
    h_struct_source: float
    h_struct_target: float
    n_source: int
    n_target: int
    ad_star: float | None = None

    def to_dict(self) -> dict:
        out = asdict(self)
        if self.ad_star is None:
            out.pop("ad_star")
        return out


def disassort_report(source_node, target_node, source_struct, target_struct) -> DisassortReport:
    nd, hns, hnt = score_distance(source_node, target_node)
    sd, hss, hst = score_distance(source_struct, target_struct)
    nd, sd = min(nd, 1.0), min(sd, 1.0)
    return DisassortReport(nd, sd, anomaly_disassort(nd, sd), hns, hnt, hss, hst,
                           len(source_node), len(target_node))
