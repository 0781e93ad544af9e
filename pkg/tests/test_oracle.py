from __future__ import annotations

import itertools
import math

import pytest
from hypothesis import given, settings

from conftest import forests, trees
from forestmpc import oracle
from forestmpc.forest import build_forest, generate


def test_peel_oracle_path_is_one_layer():
    assert oracle.peel_oracle(generate("path", 7)) == [1] * 7


def test_peel_oracle_star_has_center_on_top():
    layer = oracle.peel_oracle(generate("star", 6))
    assert layer[0] == 2 and layer[1:] == [1] * 5


def test_peel_oracle_binary_tree_depth_three():
    f = generate("balanced_binary", 15)
    layer = oracle.peel_oracle(f)
    assert oracle.is_partial_h(f, layer)
    assert max(layer) <= 4


@given(forests(max_nodes=40))
def test_peel_oracle_valid_and_logarithmic(f):
    layer = oracle.peel_oracle(f)
    assert oracle.is_partial_h(f, layer)
    assert max(layer, default=0) <= math.ceil(math.log2(max(f.n, 1))) + 1


def test_greedy_color_path_alternates():
    assert oracle.greedy_tree_color(generate("path", 5)) == [1, 2, 1, 2, 1]


def test_greedy_color_star():
    color = oracle.greedy_tree_color(generate("star", 5))
    assert color[0] == 1 and set(color[1:]) == {2}


@given(forests(max_nodes=60))
def test_greedy_color_proper(f):
    assert oracle.is_proper(f, oracle.greedy_tree_color(f))


def test_connected_subsets_of_an_edge():
    f = build_forest([(0, 1)], 2)
    assert sorted(map(sorted, oracle.connected_subsets(f))) == [[0], [0, 1], [1]]


def test_subtree_count_path_four_size_two_snapshot():
    # singletons at both ends and inside, plus the two end pairs
    subs = oracle.subtrees(generate("path", 4), 2)
    assert sorted(map(sorted, subs)) == [[0], [0, 1], [2, 3], [3]]


def test_enumeration_refuses_large_inputs():
    with pytest.raises(oracle.SizeLimit):
        oracle.connected_subsets(generate("path", 11))
    with pytest.raises(oracle.SizeLimit):
        list(oracle.all_layerings(generate("path", 9)))
    with pytest.raises(oracle.SizeLimit):
        oracle.all_trees(8)


def test_all_layerings_include_all_infinite():
    f = generate("path", 3)
    layerings = list(oracle.all_layerings(f))
    assert len(layerings) == 27
    assert (oracle.INF,) * 3 in layerings


@pytest.mark.parametrize("n, count", [(1, 1), (2, 1), (3, 3), (4, 16), (5, 125), (6, 1296)])
def test_all_trees_matches_cayley(n, count):
    assert len(oracle.all_trees(n)) == count
    assert len({t for t in oracle.all_trees(n)}) == count


@given(trees(max_nodes=8))
def test_connected_subset_count_matches_recount(f):
    by_mask = sum(1 for s in oracle.all_subsets(f) if oracle._is_connected(f, set(s)))
    assert by_mask == len(oracle.connected_subsets(f))


def test_good_subset_oracle_small_cases():
    f = generate("path", 9)
    assert oracle.is_good_subset(f, set(range(9)), 4)
    assert not oracle.is_good_subset(f, {3, 4, 5}, 4)
    assert oracle.is_good_subset(f, {0}, 0)  # the one missing neighbour is allowed
    assert not oracle.is_good_subset(f, {4}, 4)
    assert oracle.is_good_subset(f, {0, 1, 2, 3, 4, 5, 6, 7, 8}, 0)


def test_k_ball_in_direction():
    f = generate("path", 8)
    assert oracle.k_ball_in_direction(f, 3, 4, 2) == {4, 5}
    assert oracle.small_side(f, 3, 4) == 4


def test_rake_compress_oracle_fixed_cases():
    assert oracle.rake_compress_exact(generate("path", 30), 1, 1) == set()
    assert oracle.rake_compress_exact(generate("star", 10), 1, 3) == set()
    # spider with three legs of length 3: raking drops the feet, leaving runs of one
    # node; with ell=1 the runs go, otherwise only the new leaves are removed
    f = build_forest([(0, 1), (1, 2), (2, 3), (0, 4), (4, 5), (5, 6), (0, 7), (7, 8), (8, 9)], 10)
    assert oracle.rake_compress_exact(f, 1, 1) == set()
    assert oracle.rake_compress_exact(f, 1, 2) == {0, 1, 4, 7}


def test_validators_on_fixed_cases():
    f = generate("path", 3)
    assert oracle.is_strict_h(f, [1, 2, 1])
    star = generate("star", 4)
    assert not oracle.is_partial_h(star, [1, 1, 1, 1])


def test_mis_and_matching_oracles():
    f = generate("path", 4)
    assert oracle.is_maximal_independent(f, {0, 2})
    assert not oracle.is_maximal_independent(f, {0})
    assert oracle.is_maximal_matching(f, {(0, 1), (2, 3)})
    assert not oracle.is_maximal_matching(f, {(0, 1)})
    assert not oracle.is_maximal_matching(f, {(0, 1), (1, 2)})


def test_peeling_full_knowledge_leaves_outside_unassigned():
    f = generate("path", 6)
    layer = oracle.peeling_full_knowledge(f, {0, 1, 2})
    assert all(layer[v] == oracle.INF for v in (3, 4, 5))
    assert layer[0] != oracle.INF


def test_all_layerings_count():
    f = generate("path", 4)
    assert sum(1 for _ in oracle.all_layerings(f)) == 3 ** 4
    assert len(list(itertools.islice(oracle.all_layerings(f), 5))) == 5
