import json

import numpy as np
import pytest

from ggad.graph import from_edges
from ggad.pipeline import (ArtifactError, InferConfig, TrainConfig, artifact_from_dict, artifact_to_dict, infer,
                           load_artifact, save_artifact, train)

from conftest import random_graph

FAST = TrainConfig(epochs=30, hidden_dim=16, affinity_hidden_dim=16, bottleneck_dim=8, latent_dim=16, n_k=64)


@pytest.fixture(scope="module")
def fast_artifact(tiny_domains):
    return train(tiny_domains[0], FAST)


class NoLabels:
    """Graph proxy that fails loudly if anything reads ``labels``."""

    def __init__(self, g):
        self._g = g

    def __getattr__(self, name):
        if name == "labels":
            raise AssertionError("target labels were read")
        return getattr(self._g, name)


def test_zero_epochs_keeps_init(tiny_domains):
    art = train(tiny_domains[0], TrainConfig(epochs=0, latent_dim=16, hidden_dim=8, n_k=32))
    again = train(tiny_domains[0], TrainConfig(epochs=0, latent_dim=16, hidden_dim=8, n_k=32))
    assert art.history == []
    for a, b in zip(art.high.weights, again.high.weights):
        assert np.array_equal(a, b)


def test_joint_loss_decreases_per_source(tiny_domains):
    art = train(tiny_domains[0], TrainConfig(epochs=200, hidden_dim=16, affinity_hidden_dim=16,
                                             bottleneck_dim=8, latent_dim=16, n_k=64))
    for g in tiny_domains[0]:
        losses = [h["loss"] for h in art.history if h["graph"] == g.name]
        assert losses[-1] < losses[0]


def test_sources_must_be_labeled(tiny_domains):
    src = tiny_domains[0][0]
    with pytest.raises(ValueError, match="no labels"):
        train([src.with_labels(None)], FAST)
    with pytest.raises(ValueError, match="both"):
        train([src.with_labels(np.zeros(src.num_nodes))], FAST)
    with pytest.raises(ValueError):
        train([], FAST)


def test_infer_never_reads_target_labels(fast_artifact, tiny_domains):
    res = infer(fast_artifact, NoLabels(tiny_domains[1]))
    assert res.final.shape == (tiny_domains[1].num_nodes,)
    assert np.all((res.final >= 0) & (res.final <= 1))


def test_infer_outputs(fast_artifact, tiny_domains):
    from ggad.evaluation import auroc
    target = tiny_domains[1]
    res = infer(fast_artifact, target.with_labels(None))
    assert auroc(res.final, target.labels) > 0.5
    assert abs(res.fusion.w_nd + res.fusion.w_sd - 1) < 1e-12
    assert abs(res.reliability.weights.sum() - 1) < 1e-12
    assert res.pseudo.m == [int(np.ceil(0.05 * target.num_nodes))] * 3
    rep = res.to_report()
    assert set(rep) >= {"disassortativity", "fusion_weights", "reliability_weights", "pseudo_labels"}
    json.dumps(rep)


def test_infer_is_deterministic(fast_artifact, tiny_domains):
    a = infer(fast_artifact, tiny_domains[1], InferConfig(seed=3))
    b = infer(fast_artifact, tiny_domains[1], InferConfig(seed=3))
    assert np.array_equal(a.final, b.final)


def test_self_inference_has_small_disassortativity(tiny_domains):
    src = tiny_domains[0][0]
    art = train([src], TrainConfig(epochs=20, hidden_dim=16, affinity_hidden_dim=16, bottleneck_dim=8,
                                   latent_dim=16, n_k=64, seed=5))
    rep = infer(art, src.with_labels(None), InferConfig(seed=5)).report
    assert rep.nd <= 0.05 and rep.sd <= 0.05


def test_k_vote_bound(fast_artifact, tiny_domains):
    with pytest.raises(ValueError, match="between 1 and 3"):
        infer(fast_artifact, tiny_domains[1], InferConfig(k_vote=4))


def test_tiny_target_rejected(fast_artifact):
    g = from_edges(2, [(0, 1)], np.ones((2, 4)))
    with pytest.raises(ValueError):
        infer(fast_artifact, g)


def test_edgeless_target_scores(fast_artifact):
    g = from_edges(30, [], np.random.default_rng(0).standard_normal((30, 5)))
    res = infer(fast_artifact, g)
    assert np.all(np.isfinite(res.final))


def test_artifact_round_trip_exact(fast_artifact, tiny_domains, tmp_path):
    p = tmp_path / "a.json"
    save_artifact(fast_artifact, p)
    back = load_artifact(p)
    for a, b in zip(fast_artifact.high.weights, back.high.weights):
        assert np.array_equal(a, b)
    for n in ("W", "W1", "W2"):
        assert np.array_equal(getattr(fast_artifact.low, n), getattr(back.low, n))
    assert np.array_equal(fast_artifact.source_node_scores, back.source_node_scores)
    assert back.train_config == fast_artifact.train_config
    a = infer(fast_artifact, tiny_domains[1])
    b = infer(back, tiny_domains[1])
    assert np.array_equal(a.final, b.final)
    save_artifact(back, tmp_path / "b.json")
    assert (tmp_path / "b.json").read_bytes() == p.read_bytes()


def test_training_is_deterministic(tiny_domains):
    a = artifact_to_dict(train(tiny_domains[0], FAST))
    b = artifact_to_dict(train(tiny_domains[0], FAST))
    assert json.dumps(a) == json.dumps(b)


@pytest.mark.parametrize("mutate, match", [
    (lambda d: d.pop("high_order"), "high_order"),
    (lambda d: d.update(format_version=99), "format_version"),
    (lambda d: d.update(source_node_scores=[]), "empty"),
    (lambda d: d.update(source_struct_scores=["x"]), "list of numbers"),
    (lambda d: d["low_order"]["weights"].pop("W1"), "W1"),
    (lambda d: d["high_order"]["weights"]["W1"][1].__setitem__(0, float("nan")), "non-finite"),
])
def test_artifact_errors(fast_artifact, mutate, match):
    doc = json.loads(json.dumps(artifact_to_dict(fast_artifact)))
    mutate(doc)
    with pytest.raises(ArtifactError, match=match):
        artifact_from_dict(doc)


def test_load_rejects_bad_json(tmp_path):
    p = tmp_path / "bad.json"
    p.write_text("{not json")
    with pytest.raises(ArtifactError, match="not valid JSON"):
        load_artifact(p)


def test_config_rejects_unknown_keys():
    with pytest.raises(ValueError, match="bogus"):
        TrainConfig.from_dict({"bogus": 1})
    with pytest.raises(ValueError):
        TrainConfig(epochs=-1).validate()


def test_mixed_feature_widths():
    gs = [random_graph(40, 0.15, 5, seed=1, anomalies=4, name="a"),
          random_graph(40, 0.15, 9, seed=2, anomalies=4, name="b")]
    art = train(gs, TrainConfig(epochs=3, latent_dim=8, hidden_dim=8, affinity_hidden_dim=8,
                                bottleneck_dim=4, n_k=16))
    assert [s["input_dim"] for s in art.train_config["sources"]] == [5, 9]
