import logging

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from ggad.graph import (GraphFormatError, GraphValidationError, from_edges, load_graph, neighbor_sum,
                        save_graph, spmm, symmetric_normalize)


def write_dir(path, edges, features, labels=None):
    path.mkdir(parents=True, exist_ok=True)
    (path / "edges.tsv").write_text(edges)
    (path / "features.csv").write_text(features)
    if labels is not None:
        (path / "labels.csv").write_text(labels)
    return path


def test_reversed_edge_is_deduplicated(tmp_path):
    g = load_graph(write_dir(tmp_path / "g", "0\t1\n1\t0\n", "0.5\n1.5\n"))
    assert g.num_nodes == 2 and g.num_edges == 1
    assert g.labels is None


def test_empty_edges_file(tmp_path):
    g = load_graph(write_dir(tmp_path / "g", "", "1,2\n3,4\n5,6\n"))
    assert g.num_nodes == 3 and g.num_edges == 0


def test_out_of_range_edge(tmp_path):
    with pytest.raises(GraphValidationError, match="node 5"):
        load_graph(write_dir(tmp_path / "g", "0\t5\n", "1\n2\n3\n"))


def test_malformed_line_reports_line_number(tmp_path):
    with pytest.raises(GraphFormatError, match=r"edges.tsv:2"):
        load_graph(write_dir(tmp_path / "g", "0\t1\n0\tx\n", "1\n2\n"))
    with pytest.raises(GraphFormatError, match=r"features.csv:2"):
        load_graph(write_dir(tmp_path / "h", "", "1,2\n3\n"))


def test_label_count_mismatch(tmp_path):
    with pytest.raises(GraphValidationError, match="labels.csv"):
        load_graph(write_dir(tmp_path / "g", "", "1\n2\n", "0\n"))


def test_self_loops_dropped_with_warning(tmp_path, caplog):
    with caplog.at_level(logging.WARNING):
        g = load_graph(write_dir(tmp_path / "g", "0\t0\n0\t1\n1\t1\n", "1\n2\n"))
    assert g.num_edges == 1
    assert "2 self-loop" in caplog.text


def test_save_load_round_trip(tmp_path, small_graph):
    save_graph(small_graph, tmp_path / "g")
    back = load_graph(tmp_path / "g")
    assert np.array_equal(back.indptr, small_graph.indptr)
    assert np.array_equal(back.indices, small_graph.indices)
    assert np.array_equal(back.features, small_graph.features)
    assert np.array_equal(back.labels, small_graph.labels)


def test_arrays_are_read_only(small_graph):
    with pytest.raises(ValueError):
        small_graph.features[0, 0] = 1.0


def test_normalization_values():
    # path 0-1-2 plus isolated 3
    g = from_edges(4, [(0, 1), (1, 2)], np.zeros((4, 1)))
    plain = symmetric_normalize(g, False).to_dense()
    assert plain[0, 1] == pytest.approx(1 / np.sqrt(1 * 2))
    assert np.all(plain[3] == 0) and np.all(np.diag(plain) == 0)
    loops = symmetric_normalize(g, True).to_dense()
    assert loops[0, 0] == pytest.approx(1 / 2)
    assert loops[1, 1] == pytest.approx(1 / 3)
    assert loops[0, 1] == pytest.approx(1 / np.sqrt(2 * 3))
    assert loops[3, 3] == pytest.approx(1.0)


@given(st.integers(2, 25), st.floats(0.0, 1.0), st.booleans(), st.integers(0, 2**16))
def test_normalized_adjacency_symmetric_in_unit_interval(n, p, loops, seed):
    rng = np.random.default_rng(seed)
    iu = np.triu_indices(n, 1)
    keep = rng.random(len(iu[0])) < p
    g = from_edges(n, np.column_stack([iu[0][keep], iu[1][keep]]), np.zeros((n, 1)))
    adj = symmetric_normalize(g, loops)
    d = adj.to_dense()
    assert np.allclose(d, d.T, atol=0)
    assert np.all((adj.data > 0) & (adj.data <= 1))
    deg = g.degrees + (1 if loops else 0)
    rows = np.repeat(np.arange(n), np.diff(adj.indptr))
    expect = 1 / np.sqrt(deg[rows] * deg[adj.indices])
    assert np.allclose(adj.data, expect, rtol=1e-14)


def test_spmm_matches_dense(small_graph):
    adj = symmetric_normalize(small_graph, True)
    x = np.random.default_rng(1).standard_normal((small_graph.num_nodes, 4))
    assert np.allclose(spmm(adj, x), adj.to_dense() @ x, atol=1e-13)
    assert np.allclose(neighbor_sum(small_graph, x), small_graph.to_scipy().toarray() @ x, atol=1e-13)
    with pytest.raises(ValueError, match="shape"):
        spmm(adj, x[:-1])


def test_edge_array_is_canonical(small_graph):
    e = small_graph.edge_array()
    assert np.all(e[:, 0] < e[:, 1])
    assert len(e) == small_graph.num_edges


def test_from_edges_rejects_bad_labels():
    with pytest.raises(GraphValidationError):
        from_edges(2, [(0, 1)], np.zeros((2, 1)), [0, 2])
    with pytest.raises(GraphValidationError):
        from_edges(2, [(0, 1)], np.zeros((3, 1)))
