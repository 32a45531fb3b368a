import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from ggad.graph import from_edges, symmetric_normalize
from ggad.high_order import (HighOrderEncoder, contrastive_loss, high_order_loss, kink_pattern, propagate,
                             residual_embed, residual_score, train_high_order)
from ggad.optim import ParamStore, backward_check
from ggad.projection import project_graph_features
from ggad.synthetic import inject_attribute_anomalies, sample_sbm

from conftest import random_graph


def pair_loop_loss(r, normal, anomaly, margin):
    def cos(a, b):
        return a @ b / (np.linalg.norm(a) * np.linalg.norm(b))
    ok = lambda i: np.linalg.norm(r[i]) > 0
    total = 0.0
    for t in normal:
        for i in normal:
            if ok(t) and ok(i):
                total += 1.0 - cos(r[t], r[i])
        for j in anomaly:
            if ok(t) and ok(j):
                total += max(0.0, cos(r[t], r[j]) - margin)
    return total


@given(st.integers(2, 12), st.integers(0, 6), st.integers(1, 5), st.integers(0, 2**16))
def test_contrastive_matches_pair_loop(n_norm, n_anom, d, seed):
    rng = np.random.default_rng(seed)
    r = rng.standard_normal((n_norm + n_anom, d))
    if seed % 3 == 0:
        r[0] = 0.0
    normal, anomaly = np.arange(n_norm), np.arange(n_norm, n_norm + n_anom)
    res = contrastive_loss(r, normal, anomaly, 0.1)
    assert res.loss == pytest.approx(pair_loop_loss(r, normal, anomaly, 0.1), abs=1e-9)


def test_contrastive_gradient_fd():
    rng = np.random.default_rng(1)
    r = rng.standard_normal((9, 4))
    normal, anomaly = np.arange(6), np.arange(6, 9)
    res = contrastive_loss(r, normal, anomaly, 0.1)
    h = 1e-6
    for i in range(r.shape[0]):
        for k in range(r.shape[1]):
            rp, rm = r.copy(), r.copy()
            rp[i, k] += h
            rm[i, k] -= h
            fd = (contrastive_loss(rp, normal, anomaly, 0.1).loss
                  - contrastive_loss(rm, normal, anomaly, 0.1).loss) / (2 * h)
            assert res.grad[i, k] == pytest.approx(fd, rel=1e-5, abs=1e-7)


def test_zero_loss_iff_aligned_and_separated():
    r = np.array([[1.0, 0.0], [2.0, 0.0], [0.5, 0.0], [0.0, 1.0], [-1.0, 0.05]])
    assert contrastive_loss(r, [0, 1, 2], [3, 4], 0.1).loss == pytest.approx(0.0, abs=1e-12)
    r[4] = [1.0, 1.0]  # cos 0.707 > margin
    assert contrastive_loss(r, [0, 1, 2], [3, 4], 0.1).loss > 0
    r[4] = [-1.0, 0.05]
    r[2] = [0.5, 0.5]  # misaligned normal
    assert contrastive_loss(r, [0, 1, 2], [3, 4], 0.1).loss > 0


def test_zero_rows_are_skipped():
    r = np.array([[1.0, 0.0], [0.0, 0.0], [0.0, 1.0]])
    res = contrastive_loss(r, [0, 1], [2], 0.1)
    assert res.zero_rows == 1
    assert res.loss == pytest.approx(0.0)
    assert np.all(res.grad[1] == 0)


def test_pair_subsampling_is_rescaled():
    rng = np.random.default_rng(2)
    r = rng.standard_normal((60, 3))
    normal, anomaly = np.arange(50), np.arange(50, 60)
    exact = contrastive_loss(r, normal, anomaly, 0.1).loss
    est = [contrastive_loss(r, normal, anomaly, 0.1, max_pairs=200, rng=np.random.default_rng(s))
           for s in range(300)]
    assert all(e.sampled for e in est)
    assert np.mean([e.loss for e in est]) == pytest.approx(exact, rel=0.01)


def test_overlapping_sets_rejected():
    with pytest.raises(ValueError, match="overlap"):
        contrastive_loss(np.ones((3, 2)), [0, 1], [1])


def test_residuals_ignore_a_shared_offset():
    rng = np.random.default_rng(3)
    hs = [rng.standard_normal((5, 4)) for _ in range(4)]
    c = rng.standard_normal((5, 4))
    r = residual_embed(hs)
    assert r.shape == (5, 12)
    assert np.allclose(residual_embed([h + c for h in hs]), r, atol=1e-14)


def test_propagation_needs_self_loops(small_graph):
    enc = HighOrderEncoder.init(6, 8, 3)
    with pytest.raises(ValueError, match="self-looped"):
        propagate(enc, symmetric_normalize(small_graph, False), small_graph.features)
    hs = propagate(enc, symmetric_normalize(small_graph, True), small_graph.features)
    assert len(hs) == 3 and all(np.all(h >= 0) for h in hs)


def exhaustive_rs(r):
    n = r.shape[0]
    return np.array([np.mean([np.sum((r[i] - r[j]) ** 2) for j in range(n)]) for i in range(n)])


def test_residual_score_full_sample_matches_exhaustive():
    r = np.random.default_rng(4).standard_normal((40, 6))
    assert np.allclose(residual_score(r, n_k=40).values, exhaustive_rs(r), atol=1e-10)
    assert np.allclose(residual_score(r, n_k=1000).values, exhaustive_rs(r), atol=1e-10)


def test_residual_score_permutation_invariance():
    from ggad import kernels
    rng = np.random.default_rng(5)
    r = rng.standard_normal((30, 5))
    sample = r[rng.choice(30, 10, replace=False)]
    base = kernels.mean_sq_dist(r, sample)
    assert np.allclose(kernels.mean_sq_dist(r, sample[rng.permutation(10)]), base, atol=1e-12)
    perm = rng.permutation(30)
    assert np.allclose(kernels.mean_sq_dist(r[perm], sample), base[perm], atol=1e-12)


def test_residual_score_errors_and_determinism():
    r = np.random.default_rng(6).standard_normal((20, 3))
    assert np.array_equal(residual_score(r, 5, seed=1).values, residual_score(r, 5, seed=1).values)
    with pytest.raises(ValueError):
        residual_score(r[:1])
    with pytest.raises(ValueError):
        residual_score(r, n_k=0)


@pytest.mark.parametrize("seed", range(3))
def test_high_order_gradients(seed):
    g = random_graph(20, 0.25, 6, seed=seed, anomalies=4)
    adj = symmetric_normalize(g, True)
    x = g.features
    normal, anomaly = np.flatnonzero(g.labels == 0), np.flatnonzero(g.labels == 1)
    enc = HighOrderEncoder.init(6, 5, 3, seed=seed)
    store = ParamStore({f"W{k + 1}": w for k, w in enumerate(enc.weights)})

    def loss_fn(_):
        loss, grads, _ = high_order_loss(enc, adj, x, normal, anomaly)
        return loss, {f"W{k + 1}": gk for k, gk in enumerate(grads)}

    rep = backward_check(loss_fn, store, num_coords=40, seed=seed,
                         pattern_fn=lambda _: kink_pattern(enc, adj, x, normal, anomaly))
    assert rep.passed, rep


def toy_two_cluster(seed):
    rng = np.random.default_rng(seed)
    edges, blocks = sample_sbm(60, 2, 0.3, 0.02, rng)
    x = np.array([[3.0, 0.0], [0.0, 3.0]])[blocks] + 0.3 * rng.standard_normal((60, 2))
    x = np.hstack([x, 0.3 * rng.standard_normal((60, 6))])
    g = from_edges(60, edges, x, np.zeros(60, dtype=np.int64))
    return inject_attribute_anomalies(g, 5, 20, seed)


@pytest.mark.parametrize("seed", range(5))
def test_training_halves_the_loss(seed):
    g = toy_two_cluster(seed)
    x = project_graph_features(g.features, 8)
    enc = HighOrderEncoder.init(8, 16, 4, seed=seed)
    _, hist = train_high_order(enc, [(symmetric_normalize(g, True), x, g.labels)], 200, seed=seed)
    assert hist[-1] <= 0.5 * hist[0]


def test_zero_epochs_keeps_initialization():
    g = toy_two_cluster(0)
    x = project_graph_features(g.features, 8)
    enc = HighOrderEncoder.init(8, 16, 4, seed=0)
    before = [w.copy() for w in enc.weights]
    enc, hist = train_high_order(enc, [(symmetric_normalize(g, True), x, g.labels)], 0)
    assert hist == [] and all(np.array_equal(a, b) for a, b in zip(before, enc.weights))
