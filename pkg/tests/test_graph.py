import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from adgcrnn.graph import (GraphParseError, GraphValidationError, StaticGraph, load_graph,
                           normalize_adjacency, path_graph, write_edge_list)


def test_degree_one_rows():
    np.testing.assert_array_equal(normalize_adjacency([[0, 1], [1, 0]]), [[0, 1], [1, 0]])


def test_star():
    out = normalize_adjacency([[0, 1, 1], [1, 0, 0], [1, 0, 0]])
    np.testing.assert_array_equal(out, [[0, .5, .5], [1, 0, 0], [1, 0, 0]])


def test_isolated_node_keeps_zero_row():
    A = np.array([[0, 1, 0], [1, 0, 0], [0, 0, 0]])
    out = normalize_adjacency(A)
    np.testing.assert_array_equal(out[2], 0)
    np.testing.assert_array_equal(out[:2, :2], [[0, 1], [1, 0]])


@pytest.mark.parametrize("A, where", [
    ([[0, 1], [0, 0]], r"symmetric at \[\(0, 1\), \(1, 0\)\]"),
    ([[0, 2], [2, 0]], r"binary at \[\(0, 1\), \(1, 0\)\]"),
    ([[1, 0], [0, 0]], r"self-loops at nodes \[0\]"),
])
def test_validation_lists_offenders(A, where):
    with pytest.raises(GraphValidationError, match=where):
        normalize_adjacency(A)


@settings(max_examples=40, deadline=None)
@given(st.integers(2, 12), st.integers(0, 10_000))
def test_rows_with_degree_are_probability_vectors(n, seed):
    r = np.random.default_rng(seed)
    A = np.triu((r.random((n, n)) < 0.3).astype(float), 1)
    A = A + A.T
    out = normalize_adjacency(A)
    deg = A.sum(1)
    np.testing.assert_allclose(out[deg > 0].sum(1), 1.0, atol=1e-9)
    assert np.all(out[deg == 0] == 0)


def _write(tmp_path, rows, name="e.csv"):
    p = tmp_path / name
    p.write_text("from,to,cost\n" + "".join(r + "\n" for r in rows))
    return str(p)


def test_load_single_edge(tmp_path):
    g = load_graph(_write(tmp_path, ["0,1,3.5"]), 2)
    np.testing.assert_array_equal(g.adjacency, [[0, 1], [1, 0]])
    assert g.costs == {(0, 1): 3.5}


def test_duplicate_edges_idempotent(tmp_path):
    one = load_graph(_write(tmp_path, ["0,1,1"], "a.csv"), 2)
    two = load_graph(_write(tmp_path, ["0,1,1", "1,0,1"], "b.csv"), 2)
    np.testing.assert_array_equal(one.adjacency, two.adjacency)


def test_order_insensitive(tmp_path, rng):
    edges = [f"{i},{j},{i + j}" for i in range(6) for j in range(i + 1, 6) if (i * 7 + j) % 3]
    shuffled = [edges[k] for k in rng.permutation(len(edges))]
    a = load_graph(_write(tmp_path, edges, "a.csv"), 6)
    b = load_graph(_write(tmp_path, shuffled, "b.csv"), 6)
    np.testing.assert_array_equal(a.adjacency, b.adjacency)
    np.testing.assert_array_equal(a.normalized, b.normalized)


def test_two_column_rows_accepted(tmp_path):
    g = load_graph(_write(tmp_path, ["0,1", "1,2"]), 3)
    assert g.adjacency.sum() == 4


def test_out_of_range_reports_line(tmp_path):
    with pytest.raises(GraphParseError, match=r":3: node id 5"):
        load_graph(_write(tmp_path, ["0,1,1", "1,5,1"]), 3)


def test_malformed_reports_line(tmp_path):
    with pytest.raises(GraphParseError, match=r":2: malformed"):
        load_graph(_write(tmp_path, ["zero,one,1"]), 3)


def test_pemsd8_scale_graph(tmp_path):
    # 170 nodes per the PeMSD8 description; the edge file itself is not shipped.
    rows = [f"{i},{i + 1},{100.0 + i}" for i in range(169)]
    g = load_graph(_write(tmp_path, rows), 170)
    assert g.n_nodes == 170 and g.adjacency.shape == (170, 170)


def test_edge_list_roundtrip(tmp_path):
    g = path_graph(5)
    write_edge_list(g, tmp_path / "p.csv")
    back = load_graph(str(tmp_path / "p.csv"), 5)
    np.testing.assert_array_equal(back.adjacency, g.adjacency)


def test_from_adjacency():
    g = StaticGraph.from_adjacency([[0, 1], [1, 0]])
    assert g.n_nodes == 2
