from __future__ import annotations

import pytest
from hypothesis import given

from conftest import forests, trees
from forestmpc import oracle
from forestmpc.forest import (
    GENERATOR_KINDS,
    CycleDetected,
    Disconnected,
    DuplicateEdge,
    NodeOutOfRange,
    NotANeighbor,
    ParseError,
    SameNode,
    SelfLoop,
    build_forest,
    compute_importance,
    direction_set,
    format_edge_list,
    generate,
    parse_edge_list,
    read_edge_list,
    route_toward,
    side_sizes,
    subtree_membership,
    write_edge_list,
)


def test_build_sorts_adjacency_and_counts_edges():
    f = build_forest([(2, 0), (0, 1)], 3)
    assert f.adj == ((1, 2), (0,), (0,))
    assert f.m == 2
    assert f.edges() == [(0, 1), (0, 2)]


@pytest.mark.parametrize(
    "edges, n, exc",
    [
        ([(0, 1), (1, 2), (2, 0)], 3, CycleDetected),
        ([(1, 1)], 2, SelfLoop),
        ([(0, 1), (1, 0)], 2, DuplicateEdge),
        ([(0, 5)], 3, NodeOutOfRange),
        ([], -1, NodeOutOfRange),
    ],
)
def test_build_rejects_non_forests(edges, n, exc):
    with pytest.raises(exc):
        build_forest(edges, n)


def test_empty_and_isolated():
    assert build_forest([], 0).n == 0
    f = build_forest([], 3)
    assert f.component_count() == 3
    assert f.component_size(1) == 1


def test_components_of_two_paths():
    f = build_forest([(0, 1), (2, 3), (3, 4)], 5)
    assert f.component_count() == 2
    assert f.component_of(0) == f.component_of(1) != f.component_of(4)
    assert f.component_size(3) == 3


def test_distances_with_limit():
    f = generate("path", 6)
    assert f.distances_from(0) == {i: i for i in range(6)}
    assert f.distances_from(2, 1) == {1: 1, 2: 0, 3: 1}


def test_direction_set_and_route():
    f = generate("path", 5)
    assert direction_set(f, 2, 3) == {3, 4}
    assert route_toward(f, 0, 4) == 1
    assert route_toward(f, 4, 0) == 3
    with pytest.raises(NotANeighbor):
        direction_set(f, 0, 2)
    with pytest.raises(SameNode):
        route_toward(f, 1, 1)
    with pytest.raises(Disconnected):
        route_toward(build_forest([], 2), 0, 1)


@given(forests(max_nodes=25))
def test_side_sizes_match_direction_sets(f):
    sides = side_sizes(f)
    for v in f.nodes():
        for u in f.adj[v]:
            assert sides[v][u] == len(direction_set(f, v, u))


@given(forests(max_nodes=10))
def test_subtree_membership_matches_enumeration(f):
    for x in (1, 2, 4):
        assert subtree_membership(f, x) == oracle.subtree_flags(f, x)


def test_importance_fixed_cases():
    # path of 4 with threshold 2: every node has a side of at most 2 nodes
    assert all(compute_importance(generate("path", 4), 2).important)
    # two stars joined at their centres: leaves are important, centres are not
    m = 4
    edges = [(0, 1)] + [(0, 2 + i) for i in range(m)] + [(1, 2 + m + i) for i in range(m)]
    rep = compute_importance(build_forest(edges, 2 + 2 * m), m - 1)
    assert not rep.important[0] and not rep.important[1]
    assert all(rep.important[2:])
    assert rep.witness[2] == 0


@given(forests(max_nodes=30))
def test_importance_witness_attains_the_bound(f):
    for threshold in (1, 3, f.n):
        rep = compute_importance(f, threshold)
        for v in f.nodes():
            w = rep.witness[v]
            assert (w is not None) == (rep.important[v] and bool(f.adj[v]))
            if w is not None:
                assert f.component_size(v) - len(direction_set(f, v, w)) <= threshold
        if threshold == f.n:
            assert all(rep.important)


@given(trees(min_nodes=2, max_nodes=30))
def test_important_nodes_have_at_most_one_heavy_direction(f):
    threshold = 3
    rep = compute_importance(f, threshold)
    for v in rep.important_nodes():
        heavy = [y for y in f.adj[v] if len(direction_set(f, v, y)) > threshold]
        assert len(heavy) <= 1
        if heavy:
            assert heavy == [rep.witness[v]]


@pytest.mark.parametrize("kind", GENERATOR_KINDS)
@pytest.mark.parametrize("n", [0, 1, 2, 17, 300])
def test_generators_produce_forests_of_the_right_size(kind, n):
    f = generate(kind, n, seed=3)
    assert f.n == n
    if kind != "random_forest":
        assert f.m == max(0, n - 1)
    assert generate(kind, n, seed=3) == f


def test_generator_rejects_unknown_kind():
    with pytest.raises(ValueError):
        generate("cycle", 4)


def test_random_seeds_differ():
    assert generate("random_tree", 50, 1) != generate("random_tree", 50, 2)


@given(forests(max_nodes=40))
def test_edge_list_round_trip(f):
    g, table = parse_edge_list(format_edge_list(f))
    assert table is None and g == f


def test_edge_list_file_round_trip(tmp_path):
    f = generate("caterpillar", 40, 1)
    path = tmp_path / "f.txt"
    write_edge_list(f, path)
    assert read_edge_list(path) == (f, None)


def test_sparse_ids_are_compacted():
    f, table = parse_edge_list("10 20\n20 7\n")
    assert table == [7, 10, 20]
    assert f.edges() == [(0, 2), (1, 2)]


def test_parse_comments_and_declared_size():
    f, table = parse_edge_list("# a comment\n# nodes 5\n0 1\n\n3 4\n")
    assert f.n == 5 and table is None and f.m == 2


@pytest.mark.parametrize("text", ["0 1 2\n", "a b\n", "0 -1\n"])
def test_parse_rejects_garbage(text):
    with pytest.raises(ParseError):
        parse_edge_list(text)


def test_parse_rejects_cycle():
    with pytest.raises(CycleDetected):
        parse_edge_list("0 1\n1 2\n2 0\n")


def test_induced_relabels():
    f = generate("path", 6)
    sub, old = f.induced([1, 2, 4])
    assert old == [1, 2, 4]
    assert sub.edges() == [(0, 1)]
