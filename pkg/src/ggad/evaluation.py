"""Ranking metrics, ablation variants, the voting-threshold sweep and the synthetic suite."""

from __future__ import annotations

import csv
import json
import time
from dataclasses import asdict, dataclass, field, replace

import numpy as np
from scipy.stats import rankdata

from .adapters import make_pseudo_labels, tsa_fit, tsa_score
from .graph import Graph
from .pipeline import InferConfig, InferenceResult, ModelArtifact, TrainConfig, infer, train
from .synthetic import SyntheticDomainSpec, generate_synthetic_domain

VARIANTS = ("no_ada_tsa", "ada_only", "tsa_only", "full")
DEFAULT_SEEDS = (0, 1, 2, 3, 4)


def _check_binary(labels):
    y = np.asarray(labels).astype(np.int64)
    if not np.all((y == 0) | (y == 1)):
        raise ValueError("labels must be 0/1")
    return y


def auroc(scores, labels) -> float:
    """Mann-Whitney U / (n_pos * n_neg) with average ranks for ties."""
    s = np.asarray(scores, dtype=np.float64)
    y = _check_binary(labels)
    n_pos = int(y.sum())
    n_neg = len(y) - n_pos
    if n_pos == 0 or n_neg == 0:
        raise ValueError("AUROC needs both classes present")
    ranks = rankdata(s, method="average")
    u = ranks[y == 1].sum() - n_pos * (n_pos + 1) / 2.0
    return float(u / (n_pos * n_neg))


def auprc(scores, labels) -> float:
    """Average precision: step-wise sum of precision x recall increment,
    one step per distinct score (tied scores enter together)."""
    s = np.asarray(scores, dtype=np.float64)
    y = _check_binary(labels)
    n_pos = int(y.sum())
    if n_pos == 0:
        raise ValueError("AUPRC needs at least one positive")
    order = np.argsort(-s, kind="stable")
    s, y = s[order], y[order]
    last = np.r_[np.flatnonzero(np.diff(s) != 0), len(s) - 1]
    tp = np.cumsum(y)[last]
    seen = last + 1
    precision = tp / seen
    recall_step = np.diff(np.r_[0, tp]) / n_pos
    return float(np.sum(precision * recall_step))


@dataclass
class ExperimentResult:
    dataset: str
    variant: str
    seed: int
    auroc: float
    auprc: float
    runtime_ms: float
    diagnostics: dict = field(default_factory=dict)


def variant_scores(res: InferenceResult, variant: str) -> np.ndarray:
    """Final score vector for one ablation variant, built from a full inference result.

    no_ada_tsa: plain mean of the two base channels; ada_only: the fused
    channel; tsa_only: test-time adapter over the two base channels with a
    two-vote threshold; full: the end-to-end score.
    """
    ch = res.channels
    if variant == "no_ada_tsa":
        return 0.5 * (ch.rs_norm + ch.struct_norm)
    if variant == "ada_only":
        return res.fused
    if variant == "tsa_only":
        cfg = res.config
        s = np.column_stack([ch.rs_norm, ch.struct_norm])
        pseudo = make_pseudo_labels(s.T, cfg.anomaly_ratio, 2)
        return tsa_score(s, tsa_fit(s, pseudo.voted, cfg.tsa_steps, cfg.tsa_lr, cfg.seed)).values
    if variant == "full":
        return res.final
    raise ValueError(f"unknown variant {variant!r}; choose from {VARIANTS}")


def run_ablation(artifact: ModelArtifact, targets, variants=VARIANTS, seeds=DEFAULT_SEEDS,
                 icfg: InferConfig | None = None) -> list[ExperimentResult]:
    """One result per (target, variant, seed). Labels are used only by the metrics."""
    icfg = icfg or InferConfig()
    out = []
    if not variants:
        return out
    for g in targets:
        labels = g.labels
        if labels is None:
            raise ValueError(f"target {g.name!r} needs labels for evaluation")
        unlabeled = g.with_labels(None)
        for seed in seeds:
            t0 = time.perf_counter()
            res = infer(artifact, unlabeled, replace(icfg, seed=seed))
            base_ms = (time.perf_counter() - t0) * 1e3
            for v in variants:
                t1 = time.perf_counter()
                s = variant_scores(res, v)
                ms = base_ms + (time.perf_counter() - t1) * 1e3
                out.append(ExperimentResult(g.name, v, seed, auroc(s, labels), auprc(s, labels), ms,
                                            {"nd": res.report.nd, "sd": res.report.sd,
                                             "anomaly_ratio": icfg.anomaly_ratio}))
    return out


def sweep_k(artifact: ModelArtifact, target: Graph, k_values=(1, 2, 3), seeds=DEFAULT_SEEDS,
            icfg: InferConfig | None = None) -> list[dict]:
    """Full pipeline per voting threshold; one row per K with seed-averaged metrics."""
    icfg = icfg or InferConfig()
    labels = target.labels
    if labels is None:
        raise ValueError(f"target {target.name!r} needs labels for evaluation")
    unlabeled = target.with_labels(None)
    rows = []
    for k in k_values:
        if not 1 <= k <= 3:
            raise ValueError(f"k_vote must be in [1, 3], got {k}")
        au, ap, pos = [], [], []
        for seed in seeds:
            res = infer(artifact, unlabeled, replace(icfg, k_vote=k, seed=seed))
            au.append(auroc(res.final, labels))
            ap.append(auprc(res.final, labels))
            pos.append(int(res.pseudo.voted.sum()))
        rows.append({"k_vote": k, "auroc": float(np.mean(au)), "auprc": float(np.mean(ap)),
                     "voted_positives": float(np.mean(pos))})
    return rows


def summarize(results) -> dict:
    """Per-variant mean/std of AUROC and AUPRC."""
    out = {}
    for v in sorted({r.variant for r in results}):
        au = np.array([r.auroc for r in results if r.variant == v])
        ap = np.array([r.auprc for r in results if r.variant == v])
        out[v] = {"auroc_mean": float(au.mean()), "auroc_std": float(au.std()),
                  "auprc_mean": float(ap.mean()), "auprc_std": float(ap.std()), "runs": int(len(au))}
    return out


def write_results_csv(results, path) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["dataset", "variant", "seed", "auroc", "auprc", "runtime_ms"])
        for r in results:
            w.writerow([r.dataset, r.variant, r.seed, repr(r.auroc), repr(r.auprc), f"{r.runtime_ms:.3f}"])


def write_summary_json(results, path, extra: dict | None = None) -> None:
    doc = {"variants": summarize(results)}
    if extra:
        doc.update(extra)
    with open(path, "w") as fh:
        json.dump(doc, fh, indent=2, sort_keys=True)


# ---------------------------------------------------------------------------
# synthetic benchmark: two source domains, four shifted target domains


def benchmark_specs(seed: int = 0, num_nodes: int = 1000) -> tuple[list, list]:
    """Domain specs for the synthetic suite; targets shift feature scale/rotation and topology."""
    def spec(i, blocks, p_in, p_out, dim, scale, rot):
        return SyntheticDomainSpec(num_nodes, blocks, p_in, p_out, dim,
                                   {"scale": scale, "rotation": rot}, 0.05, 1000 * seed + i)
    sources = [spec(0, 4, 0.020, 0.0015, 32, 1.0, 0.0),
               spec(1, 6, 0.030, 0.0010, 48, 2.0, 0.3)]
    targets = [spec(2, 3, 0.015, 0.0020, 24, 0.5, 0.5),
               spec(3, 5, 0.040, 0.0010, 64, 3.0, 0.8),
               spec(4, 8, 0.050, 0.0005, 40, 1.5, 1.0),
               spec(5, 4, 0.010, 0.0030, 16, 1.0, 0.2)]
    return sources, targets


def benchmark_suite(seed: int = 0, num_nodes: int = 1000) -> tuple[list[Graph], list[Graph]]:
    src, tgt = benchmark_specs(seed, num_nodes)
    return ([generate_synthetic_domain(s, f"source{i}") for i, s in enumerate(src)],
            [generate_synthetic_domain(s, f"target{i}") for i, s in enumerate(tgt)])


def run_benchmark(seeds=DEFAULT_SEEDS, cfg: TrainConfig | None = None, icfg: InferConfig | None = None,
                  variants=VARIANTS, k_values=(1, 3), num_nodes: int = 1000):
    """Train per seed on the synthetic sources, evaluate ablations and the K sweep on targets.

    Returns (ablation results, K-sweep rows with a ``target`` and ``seed`` key).
    """
    cfg = cfg or TrainConfig()
    icfg = icfg or InferConfig()
    results, sweeps = [], []
    for seed in seeds:
        sources, targets = benchmark_suite(seed, num_nodes)
        art = train(sources, replace(cfg, seed=seed))
        results += run_ablation(art, targets, variants, (seed,), icfg)
        for g in targets:
            for row in sweep_k(art, g, k_values, (seed,), icfg):
                sweeps.append({"target": g.name, "seed": seed, **row})
    return results, sweeps
