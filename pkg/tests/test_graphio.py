import numpy as np
import pytest

from diffneg.graphio import (EdgeSplit, Graph, GraphFormatError, canonical_edges, load_graph,
                             load_split, neighbors, save_graph, save_split, split_edges,
                             training_subgraph)

from synth import random_graph


def write_graph_text(path, text: str):
    path.write_text(text, encoding="utf-8")
    return path


def test_load_three_node_path(tmp_path):
    p = write_graph_text(tmp_path / "g.txt",
                         "3 2 2\n1 0\n0 1\n1 1\n0 1\n1 2\n")
    g = load_graph(p)
    assert g.num_nodes == 3 and g.num_features == 2 and len(g.edges) == 2
    assert neighbors(g, 1) == [0, 2]
    assert neighbors(g, 0) == [1]


def test_reversed_duplicate_edges_collapse(tmp_path):
    p = write_graph_text(tmp_path / "g.txt", "2 1 2\n0\n0\n0 1\n1 0\n")
    g = load_graph(p)
    assert len(g.edges) == 1
    assert g.edges[0].tolist() == [0, 1]


def test_parse_errors_name_line(tmp_path):
    bad_header = write_graph_text(tmp_path / "a.txt", "3 2\n")
    with pytest.raises(GraphFormatError, match=":1"):
        load_graph(bad_header)

    bad_feature = write_graph_text(tmp_path / "b.txt", "2 2 1\n1 0\n1 oops\n0 1\n")
    with pytest.raises(GraphFormatError, match=":3"):
        load_graph(bad_feature)

    out_of_range = write_graph_text(tmp_path / "c.txt", "2 1 1\n0\n0\n0 5\n")
    with pytest.raises(GraphFormatError, match=":4"):
        load_graph(out_of_range)

    self_loop = write_graph_text(tmp_path / "d.txt", "2 1 1\n0\n0\n1 1\n")
    with pytest.raises(GraphFormatError, match=":4"):
        load_graph(self_loop)

    short_body = write_graph_text(tmp_path / "e.txt", "3 1 1\n0\n0\n")
    with pytest.raises(GraphFormatError):
        load_graph(short_body)


def test_graph_invariants_on_construction():
    with pytest.raises(GraphFormatError):
        Graph(np.ones((3, 1)), np.array([[0, 0]]))
    with pytest.raises(GraphFormatError):
        Graph(np.ones((3, 1)), np.array([[0, 3]]))


def test_canonical_edges_orders_and_dedups():
    e = canonical_edges(np.array([[2, 0], [0, 2], [1, 0]]))
    assert e.tolist() == [[0, 1], [0, 2]]


def test_adjacency_symmetry():
    g = random_graph(30, 60, 4, seed=0)
    for v in range(g.num_nodes):
        for u in neighbors(g, v):
            assert v in neighbors(g, u)


def test_neighbors_edge_cases():
    g = Graph(np.ones((4, 1)), np.array([[0, 1]]))
    assert neighbors(g, 2) == []
    with pytest.raises(IndexError):
        neighbors(g, 4)


def test_max_degree_matches_edge_scan():
    g = random_graph(40, 90, 3, seed=1)
    counts = np.zeros(g.num_nodes, dtype=int)
    for u, v in g.edges:
        counts[u] += 1
        counts[v] += 1
    v_max = int(np.argmax(counts))
    assert len(neighbors(g, v_max)) == counts.max()


def test_round_trip_identity(tmp_path):
    g = random_graph(25, 50, 6, seed=2)
    path = tmp_path / "round.txt"
    save_graph(g, path)
    assert load_graph(path) == g


def test_split_exact_on_100_edges():
    g = random_graph(60, 100, 2, seed=3)
    assert len(g.edges) == 100
    sp = split_edges(g, seed=9)
    assert (len(sp.train_edges), len(sp.val_edges), len(sp.test_edges)) == (90, 5, 5)


def test_split_rounding_rule_at_5429_edges():
    # floor(0.90 * 5429) = 4886, floor(0.05 * 5429) = 271, remainder 272.
    g = random_graph(150, 5429, 1, seed=4)
    sp = split_edges(g, seed=0)
    assert (len(sp.train_edges), len(sp.val_edges), len(sp.test_edges)) == (4886, 271, 272)


def test_split_partitions_and_is_deterministic():
    g = random_graph(50, 120, 2, seed=5)
    a = split_edges(g, seed=7)
    b = split_edges(g, seed=7)
    assert a == b
    parts = [a.train_edges, a.val_edges, a.test_edges]
    as_sets = [set(map(tuple, p.tolist())) for p in parts]
    assert as_sets[0] | as_sets[1] | as_sets[2] == g.edge_set()
    assert not (as_sets[0] & as_sets[1]) and not (as_sets[0] & as_sets[2])
    assert not (as_sets[1] & as_sets[2])
    assert split_edges(g, seed=8) != a


def test_split_needs_twenty_edges():
    g = random_graph(30, 19, 2, seed=6)
    with pytest.raises(ValueError):
        split_edges(g, seed=0)


def test_training_subgraph_identity_and_isolation():
    g = random_graph(30, 40, 2, seed=7)
    all_train = EdgeSplit(g.edges, np.empty((0, 2)), np.empty((0, 2)), seed=0)
    assert training_subgraph(g, all_train) == g

    sp = split_edges(g, seed=1)
    sub = training_subgraph(g, sp)
    assert sub.num_nodes == g.num_nodes
    assert np.array_equal(sub.features, g.features)
    assert len(sub.edges) == len(sp.train_edges)
    held_out = set(map(tuple, sp.val_edges.tolist())) | set(map(tuple, sp.test_edges.tolist()))
    for u, v in held_out:
        assert v not in neighbors(sub, u)


def test_training_subgraph_rejects_foreign_edges():
    g = random_graph(30, 40, 2, seed=8)
    bogus = EdgeSplit(np.array([[0, 1] if (0, 1) not in g.edge_set() else [0, 2]]),
                      np.empty((0, 2)), np.empty((0, 2)), seed=0)
    target = tuple(bogus.train_edges[0])
    if target in g.edge_set():
        pytest.skip("random graph already contains the probe edge")
    with pytest.raises(ValueError):
        training_subgraph(g, bogus)


def test_split_file_round_trip(tmp_path):
    g = random_graph(50, 120, 2, seed=9)
    sp = split_edges(g, seed=13)
    path = tmp_path / "split.txt"
    save_split(sp, path)
    loaded = load_split(path)
    assert loaded == sp
    assert "seed=13" in path.read_text().splitlines()[0]


def test_split_file_errors(tmp_path):
    bad = tmp_path / "bad.txt"
    bad.write_text("not a split\n")
    with pytest.raises(GraphFormatError):
        load_split(bad)
    truncated = tmp_path / "short.txt"
    truncated.write_text("split seed=1 train=2 val=1 test=1\n0 1\n")
    with pytest.raises(GraphFormatError):
        load_split(truncated)
