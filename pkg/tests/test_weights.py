import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from numpy.testing import assert_allclose, assert_array_equal

from gstar.weights import (
    AdjacencyGraph,
    build_weights,
    graph_distances,
    grid_graph,
    read_adjacency,
    write_adjacency,
)
from oracles import floyd_warshall, weights_from_distances


def path_abc():
    return AdjacencyGraph.from_edges([("A", "B"), ("B", "C")])


def random_graph(seed, k=10, prob=0.25):
    gen = np.random.default_rng(seed)
    names = [f"n{i}" for i in range(k)]
    pairs = [(i, j) for i in range(k) for j in range(i + 1, k) if gen.random() < prob]
    graph = AdjacencyGraph.from_edges([(names[i], names[j]) for i, j in pairs], names)
    return graph, pairs


def test_distances_path():
    d = graph_distances(path_abc(), 3)
    assert d[0, 2] == 2 and d[0, 1] == 1 and d[0, 0] == 0


def test_distances_cycle():
    g = AdjacencyGraph.from_edges([("A", "B"), ("B", "C"), ("C", "D"), ("D", "A")])
    d = graph_distances(g, 3)
    assert d[0, 2] == 2
    assert d[1, 3] == 2


@pytest.mark.parametrize("seed", range(5))
def test_distances_match_floyd_warshall(seed):
    graph, pairs = random_graph(seed)
    cap = 4
    ref = floyd_warshall(graph.k, pairs)
    ref = np.where(ref > cap, cap + 1, ref)
    assert_array_equal(graph_distances(graph, cap), ref)


def test_distances_disconnected_get_sentinel():
    g = AdjacencyGraph.from_edges([("A", "B")], ["A", "B", "C"])
    d = graph_distances(g, 2)
    assert d[0, 2] == 3 and d[2, 2] == 0


@pytest.mark.parametrize("seed", range(3))
def test_distance_symmetry_and_triangle(seed):
    graph, _ = random_graph(seed, k=12)
    cap = 20
    d = graph_distances(graph, cap)
    assert_array_equal(d, d.T)
    finite = d <= cap
    for m in range(graph.k):
        both = finite[:, m][:, None] & finite[m, :][None, :]
        assert np.all(d[both] <= (d[:, m][:, None] + d[m, :][None, :])[both])


def test_weights_path_example():
    W = build_weights(path_abc(), 2)
    assert W.eta == 2
    assert_array_equal(W.mats[0], np.eye(3))
    assert_array_equal(W.mats[1][0], [0, 1, 0])


def test_weights_star_example():
    g = AdjacencyGraph.from_edges([("X", "P"), ("X", "Q"), ("X", "R")])
    W = build_weights(g, 2)
    assert_allclose(W.mats[1][0], [0, 1 / 3, 1 / 3, 1 / 3])


def test_weights_beyond_diameter_allowed():
    W = build_weights(path_abc(), 5)
    assert W.eta == 5
    assert not W.mats[3].any() and not W.mats[4].any()


@pytest.mark.parametrize("seed", range(5))
def test_weights_match_oracle_and_invariants(seed):
    graph, pairs = random_graph(seed, k=9, prob=0.3)
    eta = 4
    W = build_weights(graph, eta)
    ref = weights_from_distances(floyd_warshall(graph.k, pairs), eta)
    for level in range(eta):
        assert_allclose(W.mats[level], ref[level], atol=1e-15)
        sums = W.mats[level].sum(axis=1)
        assert np.all((np.abs(sums - 1) <= 1e-12) | (sums == 0))
    assert np.all(W.mats >= 0)
    occupied = (W.mats[1:] > 0).sum(axis=0)
    assert occupied.max() <= 1


@settings(max_examples=25, deadline=None)
@given(seed=st.integers(0, 10**6))
def test_weights_permutation_equivariant(seed):
    graph, _ = random_graph(seed, k=8, prob=0.35)
    perm = np.random.default_rng(seed).permutation(graph.k)
    relabeled = AdjacencyGraph(tuple(graph.locations[i] for i in perm), graph.edges)
    W = build_weights(graph, 3).mats
    Wp = build_weights(relabeled, 3).mats
    assert_array_equal(Wp, W[:, perm][:, :, perm])


def test_keep_restricts_but_measures_on_full_graph():
    W = build_weights(path_abc(), 3, keep=["A", "C"])
    assert W.locations == ("A", "C")
    assert not W.mats[1].any()
    assert_array_equal(W.mats[2], [[0, 1], [1, 0]])


def test_graph_validation():
    with pytest.raises(ValueError):
        AdjacencyGraph(("A", "A"), frozenset())
    with pytest.raises(ValueError):
        AdjacencyGraph(("A",), frozenset({("A", "B")}))
    with pytest.raises(ValueError):
        AdjacencyGraph.from_edges([("A", "A")])


def test_adjacency_file_round_trip(tmp_path):
    path = tmp_path / "adj.txt"
    path.write_text("# zones\nlocations: Z9\nA,B\n\nB , C\n", encoding="utf-8")
    g = read_adjacency(path)
    assert g.locations == ("Z9", "A", "B", "C")
    assert g.edges == frozenset({("A", "B"), ("B", "C")})
    out = tmp_path / "copy.txt"
    write_adjacency(g, out)
    again = read_adjacency(out)
    assert again == g
    assert again.fingerprint() == g.fingerprint()


def test_adjacency_file_rejects_bad_line(tmp_path):
    path = tmp_path / "adj.txt"
    path.write_text("A,B,C\n", encoding="utf-8")
    with pytest.raises(ValueError, match=":1:"):
        read_adjacency(path)


def test_grid_graph_shape():
    g = grid_graph(13, 3)
    assert g.k == 39
    assert len(g.edges) == 13 * 2 + 12 * 3
    assert g.locations[0] == "L00" and g.locations[-1] == "L38"
