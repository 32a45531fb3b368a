"""Joint training over labeled source graphs, zero-shot inference, artifact IO."""

from __future__ import annotations

import json
import logging
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path

import numpy as np

from .adapters import (FusionWeights, PseudoLabels, ReliabilityWeights, ada_weights, fuse_scores,
                       make_pseudo_labels, tsa_fit, tsa_score)
from .disassort import DisassortReport, disassort_report
from .graph import Graph, symmetric_normalize
from .high_order import HighOrderEncoder, high_order_loss, propagate, residual_embed, residual_score
from .low_order import AffinityEncoder, affinity_loss, affinity_score, encode_gcn, encode_mlp
from .optim import OptimizerState, ParamStore, adam_step, init_params
from .projection import project_graph_features
from .scores import minmax

logger = logging.getLogger(__name__)

FORMAT_VERSION = 1
POOL_CAP = 10_000


class ArtifactError(ValueError):
    """The model artifact file is malformed or fails validation."""


class TrainingDivergedError(FloatingPointError):
    pass


def _reject_unknown(cls, doc: dict):
    unknown = set(doc) - {f.name for f in fields(cls)}
    if unknown:
        raise ValueError(f"unknown {cls.__name__} keys: {sorted(unknown)}")


@dataclass
class TrainConfig:
    epochs: int = 300
    learning_rate: float = 5e-3
    beta1: float = 0.9
    beta2: float = 0.999
    epsilon: float = 1e-8
    num_hops: int = 4
    hidden_dim: int = 64
    margin: float = 0.1
    affinity_hidden_dim: int = 64
    bottleneck_dim: int = 32
    latent_dim: int = 64
    n_k: int = 256
    pool_cap: int = POOL_CAP
    seed: int = 0

    def validate(self) -> TrainConfig:
        if self.epochs < 0:
            raise ValueError("epochs must be >= 0")
        for name in ("hidden_dim", "affinity_hidden_dim", "bottleneck_dim", "latent_dim", "n_k", "pool_cap"):
            if getattr(self, name) < 1:
                raise ValueError(f"{name} must be positive")
        if self.num_hops < 2:
            raise ValueError("num_hops must be >= 2")
        return self

    @classmethod
    def from_dict(cls, doc: dict) -> TrainConfig:
        _reject_unknown(cls, doc)
        return cls(**doc).validate()


@dataclass
class InferConfig:
    anomaly_ratio: float = 0.05
    k_vote: int = 1
    tau: float = 1.0
    eps_stab: float = 1e-6
    tsa_steps: int = 200
    tsa_lr: float = 0.1
    n_k: int | None = None  # None: reuse the training value
    seed: int = 0

    def validate(self) -> InferConfig:
        if not 0.0 < self.anomaly_ratio < 1.0:
            raise ValueError("anomaly_ratio must be in (0, 1)")
        if not 1 <= self.k_vote <= 3:
            raise ValueError(f"k_vote must be between 1 and 3 (the number of score channels), got {self.k_vote}")
        if self.tsa_steps < 0:
            raise ValueError("tsa_steps must be >= 0")
        return self

    @classmethod
    def from_dict(cls, doc: dict) -> InferConfig:
        _reject_unknown(cls, doc)
        return cls(**doc).validate()


@dataclass(eq=False)
class ModelArtifact:
    high: HighOrderEncoder
    low: AffinityEncoder
    source_node_scores: np.ndarray
    source_struct_scores: np.ndarray
    train_config: dict
    format_version: int = FORMAT_VERSION
    history: list = field(default_factory=list, repr=False)

    def validate(self) -> ModelArtifact:
        if self.format_version != FORMAT_VERSION:
            raise ArtifactError(f"unsupported format_version {self.format_version!r}")
        for name in ("source_node_scores", "source_struct_scores"):
            v = getattr(self, name)
            if v.size == 0:
                raise ArtifactError(f"{name} is empty")
            if not np.all(np.isfinite(v)):
                raise ArtifactError(f"{name} contains non-finite values")
        for w in [*self.high.weights, self.low.W, self.low.W1, self.low.W2]:
            if not np.all(np.isfinite(w)):
                raise ArtifactError("encoder weights contain non-finite values")
        return self

    @property
    def latent_dim(self) -> int:
        return self.high.input_dim


# ---------------------------------------------------------------------------


@dataclass(eq=False)
class PreparedGraph:
    graph: Graph
    x: np.ndarray
    adj_loops: object
    adj_plain: object


def prepare(g: Graph, latent_dim: int) -> PreparedGraph:
    x = project_graph_features(g.features, latent_dim)
    return PreparedGraph(g, x, symmetric_normalize(g, True), symmetric_normalize(g, False))


@dataclass
class ChannelScores:
    rs: np.ndarray         # raw residual score
    as_: np.ndarray        # raw affinity score
    rs_norm: np.ndarray    # min-max residual score
    as_norm: np.ndarray    # min-max affinity score
    diagnostics: dict = field(default_factory=dict)

    @property
    def struct_norm(self) -> np.ndarray:
        return 1.0 - self.as_norm


def score_channels(high: HighOrderEncoder, low: AffinityEncoder, pg: PreparedGraph, n_k: int,
                   seed: int) -> ChannelScores:
    r = residual_embed(propagate(high, pg.adj_loops, pg.x))
    rs = residual_score(r, n_k, seed)
    hb = encode_gcn(low, pg.adj_plain, pg.x)
    hh = encode_mlp(low, pg.x)
    af = affinity_score(hb, hh, pg.graph)
    diag = {"residual": rs.diagnostics, "affinity": af.diagnostics,
            "normalization": "min-max per graph; constant channels map to 0.5"}
    return ChannelScores(rs.values, af.values, minmax(rs.values), minmax(af.values), diag)


def _check_sources(sources):
    if not sources:
        raise ValueError("training needs at least one source graph")
    for g in sources:
        if g.labels is None:
            raise ValueError(f"source graph {g.name!r} has no labels")
        if g.labels.sum() == 0 or g.labels.sum() == g.num_nodes:
            raise ValueError(f"source graph {g.name!r} must contain both normal and anomalous nodes")


def train(sources, cfg: TrainConfig | None = None, on_epoch=None) -> ModelArtifact:
    """Jointly minimise L_low + L_high, one optimizer step per source graph per epoch."""
    cfg = (cfg or TrainConfig()).validate()
    _check_sources(sources)
    prepared = [prepare(g, cfg.latent_dim) for g in sources]
    shapes = (HighOrderEncoder.param_shapes(cfg.latent_dim, cfg.hidden_dim, cfg.num_hops)
              + AffinityEncoder.param_shapes(cfg.latent_dim, cfg.affinity_hidden_dim, cfg.bottleneck_dim))
    store = init_params(shapes, cfg.seed)
    high = HighOrderEncoder.from_store(store, cfg.num_hops, cfg.margin)
    low = AffinityEncoder.from_store(store)
    opt = OptimizerState(cfg.learning_rate, cfg.beta1, cfg.beta2, cfg.epsilon)
    pair_rng = np.random.default_rng([cfg.seed, 1])
    history = []
    for epoch in range(cfg.epochs):
        totals = np.zeros(3)
        for pg in prepared:
            y = pg.graph.labels
            l_high, g_high, diag = high_order_loss(high, pg.adj_loops, pg.x, np.flatnonzero(y == 0),
                                                   np.flatnonzero(y == 1), pair_rng)
            l_low, g_low, _ = affinity_loss(low, pg.adj_plain, pg.graph, pg.x)
            loss = l_low + l_high
            if not np.isfinite(loss):
                raise TrainingDivergedError(
                    f"non-finite loss at epoch {epoch} on {pg.graph.name!r}: "
                    f"L_high={l_high}, L_low={l_low}, zero residual rows={diag.zero_rows}")
            store.accumulate({f"high.W{k + 1}": g for k, g in enumerate(g_high)})
            store.accumulate({f"low.{k}": g for k, g in g_low.items()})
            adam_step(store, opt)
            if not store.all_finite():
                raise TrainingDivergedError(f"parameters became non-finite at epoch {epoch}")
            history.append({"epoch": epoch, "graph": pg.graph.name, "loss": loss,
                            "loss_high": l_high, "loss_low": l_low})
            totals += (loss, l_high, l_low)
        if on_epoch is not None:
            on_epoch(epoch, *totals)

    node_pool, struct_pool = [], []
    for pg in prepared:
        ch = score_channels(high, low, pg, cfg.n_k, cfg.seed)
        node_pool.append(ch.rs_norm)
        struct_pool.append(ch.struct_norm)
    node_pool = np.concatenate(node_pool)
    struct_pool = np.concatenate(struct_pool)
    if len(node_pool) > cfg.pool_cap:
        keep = np.sort(np.random.default_rng([cfg.seed, 2]).choice(len(node_pool), cfg.pool_cap, replace=False))
        node_pool, struct_pool = node_pool[keep], struct_pool[keep]

    tc = asdict(cfg)
    tc["sources"] = [{"name": g.name, "num_nodes": g.num_nodes, "input_dim": g.features.shape[1]}
                     for g in sources]
    return ModelArtifact(high, low, node_pool, struct_pool, tc, history=history).validate()


# ---------------------------------------------------------------------------


@dataclass(eq=False)
class InferenceResult:
    channels: ChannelScores
    fused: np.ndarray
    final: np.ndarray
    report: DisassortReport
    fusion: FusionWeights
    reliability: ReliabilityWeights
    pseudo: PseudoLabels
    config: InferConfig

    @property
    def channel_matrix(self) -> np.ndarray:
        return np.column_stack([self.channels.rs_norm, self.channels.struct_norm, self.fused])

    def to_report(self) -> dict:
        return {
            "disassortativity": self.report.to_dict(),
            "fusion_weights": {"w_nd": self.fusion.w_nd, "w_sd": self.fusion.w_sd,
                               "tau": self.fusion.tau, "eps_stab": self.fusion.eps_stab},
            "reliability_weights": {"channels": ["rs", "1-as", "s_ad"],
                                    "weights": self.reliability.weights.tolist(),
                                    "diagnostics": self.reliability.diagnostics},
            "pseudo_labels": {"m_per_channel": self.pseudo.m, "k_vote": self.pseudo.k_vote,
                              "voted_positives": int(self.pseudo.voted.sum())},
            "channel_diagnostics": self.channels.diagnostics,
            "infer_config": asdict(self.config),
        }


def infer(artifact: ModelArtifact, target: Graph, icfg: InferConfig | None = None) -> InferenceResult:
    """Score a target graph with frozen encoders; target labels are never read."""
    icfg = (icfg or InferConfig()).validate()
    if target.num_nodes < 3:
        raise ValueError("inference needs a target graph with at least 3 nodes")
    n_k = icfg.n_k if icfg.n_k is not None else int(artifact.train_config.get("n_k", 256))
    pg = prepare(target, artifact.latent_dim)
    ch = score_channels(artifact.high, artifact.low, pg, n_k, icfg.seed)
    rep = disassort_report(artifact.source_node_scores, ch.rs_norm,
                           artifact.source_struct_scores, ch.struct_norm)
    fw = ada_weights(rep.nd, rep.sd, icfg.tau, icfg.eps_stab)
    fused = fuse_scores(ch.rs_norm, ch.as_norm, fw).values
    s = np.column_stack([ch.rs_norm, ch.struct_norm, fused])
    pseudo = make_pseudo_labels(s.T, icfg.anomaly_ratio, icfg.k_vote)
    rel = tsa_fit(s, pseudo.voted, icfg.tsa_steps, icfg.tsa_lr, icfg.seed)
    final = tsa_score(s, rel).values
    return InferenceResult(ch, fused, final, rep, fw, rel, pseudo, icfg)


# ---------------------------------------------------------------------------
# artifact JSON


def _weights_doc(named):
    return {name: [list(w.shape), w.ravel().tolist()] for name, w in named}


def _read_weight(doc, name):
    try:
        shape, values = doc[name]
        arr = np.array(values, dtype=np.float64)
        return arr.reshape([int(s) for s in shape])
    except KeyError:
        raise ArtifactError(f"missing weight {name!r}") from None
    except (TypeError, ValueError) as exc:
        raise ArtifactError(f"malformed weight {name!r}: {exc}") from None


def artifact_to_dict(a: ModelArtifact) -> dict:
    return {
        "format_version": a.format_version,
        "high_order": {
            "l": a.high.num_hops, "d_h": a.high.hidden_dim, "margin": a.high.margin,
            "weights": _weights_doc((f"W{k + 1}", w) for k, w in enumerate(a.high.weights)),
        },
        "low_order": {
            "hidden": a.low.hidden_dim, "bottleneck": a.low.bottleneck_dim,
            "weights": _weights_doc([("W", a.low.W), ("W1", a.low.W1), ("W2", a.low.W2)]),
        },
        "source_node_scores": a.source_node_scores.tolist(),
        "source_struct_scores": a.source_struct_scores.tolist(),
        "train_config": a.train_config,
    }


def artifact_from_dict(doc: dict) -> ModelArtifact:
    if not isinstance(doc, dict):
        raise ArtifactError("artifact must be a JSON object")
    for key in ("format_version", "high_order", "low_order", "source_node_scores",
                "source_struct_scores", "train_config"):
        if key not in doc:
            raise ArtifactError(f"missing field {key!r}")
    if doc["format_version"] != FORMAT_VERSION:
        raise ArtifactError(f"unsupported format_version {doc['format_version']!r}")
    ho, lo = doc["high_order"], doc["low_order"]
    try:
        l = int(ho["l"])
        high = HighOrderEncoder([_read_weight(ho["weights"], f"W{k + 1}") for k in range(l)],
                                float(ho["margin"]))
        low = AffinityEncoder(*(_read_weight(lo["weights"], n) for n in ("W", "W1", "W2")))
    except KeyError as exc:
        raise ArtifactError(f"missing field {exc.args[0]!r} in encoder block") from None
    except ValueError as exc:
        if isinstance(exc, ArtifactError):
            raise
        raise ArtifactError(f"invalid encoder block: {exc}") from None
    pools = {}
    for key in ("source_node_scores", "source_struct_scores"):
        try:
            pools[key] = np.array(doc[key], dtype=np.float64).ravel()
        except (TypeError, ValueError):
            raise ArtifactError(f"field {key!r} must be a list of numbers") from None
    return ModelArtifact(high, low, pools["source_node_scores"], pools["source_struct_scores"],
                         dict(doc["train_config"]), int(doc["format_version"])).validate()


def save_artifact(a: ModelArtifact, path) -> None:
    Path(path).write_text(json.dumps(artifact_to_dict(a)), encoding="utf-8")


def load_artifact(path) -> ModelArtifact:
    text = Path(path).read_text(encoding="utf-8")
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ArtifactError(f"{path}: not valid JSON ({exc.msg} at line {exc.lineno})") from None
    return artifact_from_dict(doc)
