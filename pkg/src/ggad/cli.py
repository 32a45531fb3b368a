"""Command-line entry point: train, infer, metrics, synth, inject, eval, ablate, sweep-k, benchmark.

Exit codes: 0 success, 2 input or validation error, 3 numerical failure.
"""

from __future__ import annotations

import argparse
import csv
import json
import logging
import sys
from dataclasses import asdict, replace
from pathlib import Path

import numpy as np

from .disassort import ad_star, disassort_report
from .evaluation import (DEFAULT_SEEDS, VARIANTS, auprc, auroc, run_ablation, run_benchmark, summarize,
                         sweep_k, write_results_csv, write_summary_json)
from .graph import Graph, GraphFormatError, GraphValidationError, load_graph, save_graph
from .pipeline import (ArtifactError, InferConfig, TrainConfig, TrainingDivergedError, infer, load_artifact,
                       prepare, save_artifact, score_channels, train)
from .synthetic import SyntheticDomainSpec, generate_synthetic_domain, inject_attribute_anomalies, \
    inject_structural_anomalies

log = logging.getLogger("ggad")

EXIT_OK, EXIT_INPUT, EXIT_NUMERIC = 0, 2, 3


class UsageError(ValueError):
    """Bad command-line input; maps to exit code 2."""


def _read_json(path) -> dict:
    try:
        doc = json.loads(Path(path).read_text())
    except FileNotFoundError:
        raise UsageError(f"config file not found: {path}") from None
    except json.JSONDecodeError as e:
        raise UsageError(f"{path}: invalid JSON ({e})") from None
    if not isinstance(doc, dict):
        raise UsageError(f"{path}: expected a JSON object")
    return doc


def _merge(cls, config_path, overrides: dict):
    """File values first, then any flag that was actually given."""
    doc = _read_json(config_path) if config_path else {}
    doc.update({k: v for k, v in overrides.items() if v is not None})
    return cls.from_dict(doc)


def _load_labeled(path) -> Graph:
    g = load_graph(path)
    if g.labels is None:
        raise UsageError(f"{Path(path) / 'labels.csv'}: missing; source graphs need labels")
    return g


def _write_json(path, doc) -> None:
    Path(path).parent.mkdir(parents=True, exist_ok=True)
    Path(path).write_text(json.dumps(doc, indent=2, sort_keys=True) + "\n")


def _infer_overrides(a) -> dict:
    return {"anomaly_ratio": a.anomaly_ratio, "k_vote": a.k_vote, "tau": a.tau, "n_k": a.n_k,
            "tsa_steps": a.tsa_steps, "tsa_lr": a.tsa_lr, "seed": a.seed}


# ---------------------------------------------------------------------------
# commands


def cmd_train(a) -> int:
    cfg = _merge(TrainConfig, a.config, {
        "epochs": a.epochs, "learning_rate": a.learning_rate, "num_hops": a.num_hops,
        "hidden_dim": a.hidden_dim, "margin": a.margin, "n_k": a.n_k, "seed": a.seed})
    sources = [_load_labeled(p) for p in a.sources]
    if cfg.epochs == 0:
        log.warning("epochs=0: writing an untrained artifact")

    def on_epoch(epoch, loss, high, low):
        if epoch % a.log_every == 0 or epoch == cfg.epochs - 1:
            print(f"epoch {epoch:4d}  loss={loss:.6f}  loss_high={high:.6f}  loss_low={low:.6f}", flush=True)

    art = train(sources, cfg, on_epoch)
    save_artifact(art, a.out)
    log.info("wrote %s", a.out)
    return EXIT_OK


def cmd_infer(a) -> int:
    icfg = _merge(InferConfig, a.config, _infer_overrides(a))
    art = load_artifact(a.artifact)
    target = load_graph(a.target).with_labels(None)
    res = infer(art, target, icfg)
    out = Path(a.out)
    out.parent.mkdir(parents=True, exist_ok=True)
    with open(out, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["node_id", "rs", "as", "s_ad", "final"])
        for i in range(target.num_nodes):
            w.writerow([i, repr(float(res.channels.rs_norm[i])), repr(float(res.channels.as_norm[i])),
                        repr(float(res.fused[i])), repr(float(res.final[i]))])
    report = res.to_report()
    report.update({"target": str(a.target), "num_nodes": target.num_nodes, "artifact": str(a.artifact)})
    _write_json(a.report or out.with_suffix(".report.json"), report)
    d = res.report
    print(f"nd={d.nd:.6f} sd={d.sd:.6f} ad={d.ad:.6f} voted_positives={int(res.pseudo.voted.sum())}")
    return EXIT_OK


def cmd_metrics(a) -> int:
    art = load_artifact(a.artifact)
    n_k = a.n_k or int(art.train_config.get("n_k", 256))
    rows = []
    for path in a.target:
        g = load_graph(path).with_labels(None)
        ch = score_channels(art.high, art.low, prepare(g, art.latent_dim), n_k, a.seed)
        rep = disassort_report(art.source_node_scores, ch.rs_norm, art.source_struct_scores, ch.struct_norm)
        rows.append((str(path), rep))
    if len(rows) > 1:
        for (_, rep), (_, star) in zip(rows, ad_star([(p, r.ad) for p, r in rows])):
            rep.ad_star = star
    for path, rep in rows:
        extra = "" if rep.ad_star is None else f" ad_star={rep.ad_star:.6f}"
        print(f"{path}: nd={rep.nd:.6f} sd={rep.sd:.6f} ad={rep.ad:.6f}{extra}")
    if a.out:
        _write_json(a.out, {"targets": {p: r.to_dict() for p, r in rows}, "seed": a.seed, "n_k": n_k})
    return EXIT_OK


def cmd_synth(a) -> int:
    spec = SyntheticDomainSpec.load(a.spec)
    if a.seed is not None:
        spec = replace(spec, seed=a.seed).validate()
    g = generate_synthetic_domain(spec, a.name or Path(a.out).name)
    save_graph(g, a.out)
    (Path(a.out) / "spec.json").write_text(spec.to_json() + "\n")
    print(f"wrote {a.out}: N={g.num_nodes} edges={g.num_edges} anomalies={int(g.labels.sum())}")
    return EXIT_OK


def cmd_inject(a) -> int:
    g = load_graph(a.graph)
    if g.labels is None:
        g = g.with_labels(np.zeros(g.num_nodes, dtype=np.int64))
    g = inject_structural_anomalies(g, a.cliques, a.clique_size, a.seed)
    g = inject_attribute_anomalies(g, a.attributes, a.candidate_pool, a.seed + 1,
                                   exclude=np.flatnonzero(g.labels))
    save_graph(g, a.out)
    print(f"wrote {a.out}: anomalies={int(g.labels.sum())}")
    return EXIT_OK


def _read_column(path, column):
    with open(path, newline="") as fh:
        rows = list(csv.reader(fh))
    if not rows:
        raise UsageError(f"{path}: empty file")
    header = rows[0]
    if column not in header:
        raise UsageError(f"{path}: no column {column!r} in header {header}")
    j = header.index(column)
    try:
        return np.array([float(r[j]) for r in rows[1:]])
    except (ValueError, IndexError) as e:
        raise UsageError(f"{path}: bad value in column {column!r} ({e})") from None


def _read_labels(path):
    try:
        lines = [ln.strip() for ln in Path(path).read_text().splitlines() if ln.strip()]
    except FileNotFoundError:
        raise UsageError(f"labels file not found: {path}") from None
    try:
        return np.array([int(v) for v in lines])
    except ValueError as e:
        raise UsageError(f"{path}: {e}") from None


def cmd_eval(a) -> int:
    scores = _read_column(a.scores, a.column)
    labels = _read_labels(a.labels)
    if len(scores) != len(labels):
        raise UsageError(f"{len(scores)} scores but {len(labels)} labels")
    print(f"auroc={auroc(scores, labels)!r} auprc={auprc(scores, labels)!r}")
    return EXIT_OK


def _seeds(a):
    return tuple(a.seeds) if a.seeds else DEFAULT_SEEDS


def cmd_ablate(a) -> int:
    icfg = _merge(InferConfig, a.config, _infer_overrides(a))
    art = load_artifact(a.artifact)
    targets = [load_graph(p) for p in a.targets]
    results = run_ablation(art, targets, a.variants or VARIANTS, _seeds(a), icfg)
    write_results_csv(results, a.out_csv)
    write_summary_json(results, a.out_json, {"infer_config": asdict(icfg)})
    for v, s in summarize(results).items():
        print(f"{v:12s} auroc={s['auroc_mean']:.4f}+-{s['auroc_std']:.4f} auprc={s['auprc_mean']:.4f}")
    return EXIT_OK


def cmd_sweep_k(a) -> int:
    icfg = _merge(InferConfig, a.config, _infer_overrides(a))
    art = load_artifact(a.artifact)
    rows = sweep_k(art, load_graph(a.target), tuple(a.k_values), _seeds(a), icfg)
    with open(a.out_csv, "w", newline="") as fh:
        w = csv.DictWriter(fh, ["k_vote", "auroc", "auprc", "voted_positives"], lineterminator="\n")
        w.writeheader()
        w.writerows(rows)
    for r in rows:
        print(f"k_vote={r['k_vote']} auroc={r['auroc']:.4f} auprc={r['auprc']:.4f}")
    return EXIT_OK


def cmd_benchmark(a) -> int:
    cfg = TrainConfig(epochs=a.epochs) if a.epochs is not None else TrainConfig()
    icfg = InferConfig()
    results, sweeps = run_benchmark(_seeds(a), cfg, icfg, num_nodes=a.num_nodes)
    write_results_csv(results, a.out_csv)
    write_summary_json(results, a.out_json, {"train_config": asdict(cfg), "infer_config": asdict(icfg),
                                             "k_sweep": sweeps})
    for v, s in summarize(results).items():
        print(f"{v:12s} auroc={s['auroc_mean']:.4f}+-{s['auroc_std']:.4f}")
    return EXIT_OK


# ---------------------------------------------------------------------------
# parser


def _add_infer_flags(p):
    d = InferConfig()
    p.add_argument("--config", help="JSON file with inference settings; flags override it")
    p.add_argument("--anomaly-ratio", type=float, help=f"pseudo-label ratio M/N (default {d.anomaly_ratio})")
    p.add_argument("--k-vote", type=int, help=f"voting threshold, 1..3 (default {d.k_vote})")
    p.add_argument("--tau", type=float, help=f"fusion temperature (default {d.tau})")
    p.add_argument("--n-k", type=int, help="residual sample size (default: the training value)")
    p.add_argument("--tsa-steps", type=int, help=f"adapter steps (default {d.tsa_steps})")
    p.add_argument("--tsa-lr", type=float, help=f"adapter learning rate (default {d.tsa_lr})")
    p.add_argument("--seed", type=int, help=f"sampling seed (default {d.seed})")


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="ggad", description=__doc__.splitlines()[0],
                                 formatter_class=argparse.ArgumentDefaultsHelpFormatter)
    ap.add_argument("-v", "--verbose", action="count", default=0, help="more log output")
    sub = ap.add_subparsers(dest="command", required=True)
    t = TrainConfig()

    p = sub.add_parser("train", help="train both encoders on labeled source graphs")
    p.add_argument("--sources", nargs="+", required=True, help="graph directories")
    p.add_argument("--config", help="JSON file with training settings; flags override it")
    p.add_argument("--out", required=True, help="artifact JSON path")
    p.add_argument("--epochs", type=int, help=f"training epochs (default {t.epochs})")
    p.add_argument("--learning-rate", type=float, help=f"Adam step size (default {t.learning_rate})")
    p.add_argument("--num-hops", type=int, help=f"propagation depth l (default {t.num_hops})")
    p.add_argument("--hidden-dim", type=int, help=f"high-order width (default {t.hidden_dim})")
    p.add_argument("--margin", type=float, help=f"contrastive margin (default {t.margin})")
    p.add_argument("--n-k", type=int, help=f"residual sample size (default {t.n_k})")
    p.add_argument("--seed", type=int, help=f"global seed (default {t.seed})")
    p.add_argument("--log-every", type=int, default=1, help="print losses every this many epochs")
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("infer", help="score a target graph zero-shot")
    p.add_argument("--artifact", required=True)
    p.add_argument("--target", required=True, help="graph directory")
    p.add_argument("--out", required=True, help="scores CSV path")
    p.add_argument("--report", help="JSON report path (default: next to the CSV)")
    _add_infer_flags(p)
    p.set_defaults(func=cmd_infer)

    p = sub.add_parser("metrics", help="node/structure disassortativity of targets against the source pools")
    p.add_argument("--artifact", required=True)
    p.add_argument("--target", nargs="+", required=True)
    p.add_argument("--n-k", type=int, default=None)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", help="optional JSON output")
    p.set_defaults(func=cmd_metrics)

    p = sub.add_parser("synth", help="generate a synthetic domain from a spec JSON")
    p.add_argument("--spec", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--name", default=None)
    p.add_argument("--seed", type=int, default=None, help="override the spec seed")
    p.set_defaults(func=cmd_synth)

    p = sub.add_parser("inject", help="inject clique and attribute anomalies into a graph")
    p.add_argument("--graph", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--cliques", type=int, default=0)
    p.add_argument("--clique-size", type=int, default=5)
    p.add_argument("--attributes", type=int, default=0, help="number of attribute anomalies")
    p.add_argument("--candidate-pool", type=int, default=50)
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(func=cmd_inject)

    p = sub.add_parser("eval", help="AUROC/AUPRC of a score column against labels")
    p.add_argument("--scores", required=True)
    p.add_argument("--labels", required=True)
    p.add_argument("--column", default="final")
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("ablate", help="run the four ablation variants over targets and seeds")
    p.add_argument("--artifact", required=True)
    p.add_argument("--targets", nargs="+", required=True)
    p.add_argument("--variants", nargs="*", choices=VARIANTS)
    p.add_argument("--seeds", nargs="*", type=int)
    p.add_argument("--out-csv", required=True)
    p.add_argument("--out-json", required=True)
    _add_infer_flags(p)
    p.set_defaults(func=cmd_ablate)

    p = sub.add_parser("sweep-k", help="AUROC/AUPRC per voting threshold")
    p.add_argument("--artifact", required=True)
    p.add_argument("--target", required=True)
    p.add_argument("--k-values", nargs="+", type=int, default=[1, 2, 3])
    p.add_argument("--seeds", nargs="*", type=int)
    p.add_argument("--out-csv", required=True)
    _add_infer_flags(p)
    p.set_defaults(func=cmd_sweep_k)

    p = sub.add_parser("benchmark", help="train and evaluate on the built-in synthetic suite")
    p.add_argument("--seeds", nargs="*", type=int)
    p.add_argument("--epochs", type=int, default=None)
    p.add_argument("--num-nodes", type=int, default=1000)
    p.add_argument("--out-csv", required=True)
    p.add_argument("--out-json", required=True)
    p.set_defaults(func=cmd_benchmark)
    return ap


def main(argv=None) -> int:
    ap = build_parser()
    a = ap.parse_args(argv)
    logging.basicConfig(level=logging.WARNING - 10 * min(a.verbose, 2),
                        format="%(levelname)s %(name)s: %(message)s", stream=sys.stderr)
    try:
        return a.func(a)
    except (TrainingDivergedError, FloatingPointError) as e:
        print(f"error: numerical failure: {e}", file=sys.stderr)
        return EXIT_NUMERIC
    except (UsageError, GraphFormatError, GraphValidationError, ArtifactError, ValueError,
            FileNotFoundError, KeyError) as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_INPUT


if __name__ == "__main__":
    sys.exit(main())
