from __future__ import annotations

import itertools
import json
import math
import random

import pytest
from hypothesis import given, settings, strategies as st

from conftest import forests, trees
from forestmpc import oracle
from forestmpc.forest import build_forest, direction_set, generate, subtree_membership
from forestmpc.hdecomp import (
    INF,
    DomainMismatch,
    EmptySubset,
    FormatError,
    GoodSubset,
    IncompleteDecomposition,
    Layering,
    check_good_subset,
    collection_k,
    combine_preprocessed,
    conservative_peeling,
    default_preprocess_iterations,
    generalized_rake_compress_step,
    good_subset_collection,
    min_combine,
    optimal_space_preprocess,
    pivot_nodes,
    rake_compress_bound,
    strict_h_decomp,
    subtree_rc,
    validate_complete,
    validate_partial_h,
    validate_strict_h,
)
from forestmpc.mpcsim import MpcConfig, MpcSim, ceil_log2
from forestmpc.pipeline import layer_bound


def non_binding(n: int, k: int = 32, **kw) -> MpcConfig:
    return MpcConfig(n=n, k_param=k, epsilon_capacity=max(n, k, 32), cap2=10 ** 6, cap3=10 ** 6,
                     local_capacity=10 ** 9, **kw)


# -- layerings and validators ----------------------------------------------------

def test_layering_constructors_and_views():
    lay = Layering.of([1, 3, INF, 3])
    assert len(lay) == 4 and lay[1] == 3 and list(lay) == [1, 3, INF, 3]
    assert lay.max_layer == 3
    assert lay.unassigned_nodes() == [2]
    assert lay.histogram() == {"1": 1, "3": 2, "inf": 1}
    assert Layering.unassigned(2).max_layer == 0
    with pytest.raises(ValueError):
        Layering.of([0])
    with pytest.raises(ValueError):
        Layering.of([1.5])


@given(st.lists(st.one_of(st.integers(1, 50), st.just(INF)), max_size=30))
def test_layering_text_and_json_round_trip(values):
    lay = Layering.of(values)
    assert Layering.from_text(lay.to_text(), len(lay)) == lay
    assert Layering.from_json(lay.to_json(), len(lay)) == lay


@pytest.mark.parametrize(
    "text",
    ["0 1\n", "0 1\n1 0\n", "0 1\n0 2\n", "0 1\n5 1\n", "0 x\n1 1\n", "0 1 2\n1 1\n"],
)
def test_layering_text_rejects_malformed(text):
    with pytest.raises(FormatError):
        Layering.from_text(text, 2)


def test_layering_text_comments_and_json_errors():
    assert Layering.from_text("# layers\n0 inf\n1 2\n", 2) == Layering.of([INF, 2])
    with pytest.raises(FormatError):
        Layering.from_json("[1, 2]", 2)
    with pytest.raises(FormatError):
        Layering.from_json(json.dumps({"n": 3, "layer": ["1", "1", "1"]}), 2)


def test_partial_h_examples():
    path, star = generate("path", 3), generate("star", 4)
    assert validate_partial_h(path, [INF] * 3)
    assert validate_partial_h(path, [1, 1, 1])
    verdict = validate_partial_h(star, [1, 1, 1, 1])
    assert not verdict and verdict.node == 0
    with pytest.raises(DomainMismatch):
        validate_partial_h(path, [1, 1])


def test_strict_h_examples():
    path = generate("path", 3)
    assert pivot_nodes(path, [1, 2, 1]) == {1}
    assert validate_strict_h(path, [1, 2, 1])
    assert validate_strict_h(generate("path", 5), [1] * 5)
    # node 1 is a non-pivot with two higher neighbours
    verdict = validate_strict_h(path, [2, 1, 2])
    assert not verdict and verdict.node == 1


@settings(max_examples=200)
@given(trees(max_nodes=6), st.data())
def test_validators_match_the_oracle(f, data):
    layer = data.draw(st.lists(st.sampled_from([1, 2, 3, INF]), min_size=f.n, max_size=f.n))
    assert bool(validate_partial_h(f, layer)) == oracle.is_partial_h(f, layer)
    assert bool(validate_strict_h(f, layer)) == oracle.is_strict_h(f, layer)


def test_complete_verdict():
    assert validate_complete(Layering.of([1, 2]))
    verdict = validate_complete(Layering.of([1, INF]))
    assert not verdict and verdict.node == 1


def test_min_combine_examples():
    assert min_combine([1, INF], [2, 1]) == Layering.of([1, 1])
    lay = Layering.of([3, 1, INF])
    assert min_combine(lay, Layering.unassigned(3)) == lay
    with pytest.raises(DomainMismatch):
        min_combine([1], [1, 2])


def test_min_closure_exhaustive_on_small_path():
    f = generate("path", 4)
    valid = [lay for lay in oracle.all_layerings(f) if validate_strict_h(f, lay)]
    for a, b in itertools.combinations(valid, 2):
        assert validate_strict_h(f, min_combine(a, b))


@settings(max_examples=100)
@given(forests(max_nodes=30), st.data())
def test_min_closure_on_peeled_subsets(f, data):
    subset = lambda: data.draw(st.sets(st.integers(0, f.n - 1), min_size=1))  # noqa: E731
    a, b = conservative_peeling(f, subset()), conservative_peeling(f, subset())
    assert validate_strict_h(f, a) and validate_strict_h(f, b)
    assert validate_strict_h(f, min_combine(a, b))


# -- conservative peeling --------------------------------------------------------

def test_peeling_path_of_five():
    assert conservative_peeling(generate("path", 5), range(5)) == Layering.of([1] * 5)


def test_peeling_star():
    assert conservative_peeling(generate("star", 5), range(5)) == Layering.of([2, 1, 1, 1, 1])


def test_peeling_lone_high_degree_node_never_peels():
    f = generate("star", 6)
    assert conservative_peeling(f, {0})[0] == INF


def test_peeling_rejects_empty_subset():
    with pytest.raises(EmptySubset):
        conservative_peeling(generate("path", 3), [])


def test_peeling_disconnected_subset():
    f = generate("path", 7)
    lay = conservative_peeling(f, {0, 1, 5})
    assert validate_strict_h(f, lay)
    assert lay[0] != INF and lay[2] == INF


@settings(max_examples=150)
@given(forests(max_nodes=10), st.data())
def test_peeling_locality_against_full_knowledge(f, data):
    U = data.draw(st.sets(st.integers(0, f.n - 1), min_size=1))
    assert list(conservative_peeling(f, U)) == oracle.peeling_full_knowledge(f, U)


def test_peeling_reads_only_the_induced_subforest_and_degrees():
    # two forests that agree on F[U] and on the degrees of U peel U identically
    a = build_forest([(0, 1), (1, 2), (2, 3), (3, 4)], 6)
    b = build_forest([(0, 1), (1, 2), (2, 5), (3, 4)], 6)
    U = {0, 1, 2}
    assert conservative_peeling(a, U) == conservative_peeling(b, U)


@settings(max_examples=100)
@given(trees(min_nodes=1, max_nodes=60), st.data())
def test_good_subset_center_peels_early(f, data):
    v = data.draw(st.integers(0, f.n - 1))
    skip = data.draw(st.sampled_from(list(f.adj[v]) + [None]))
    U = {v}
    for x in f.adj[v]:
        if x != skip:
            U |= direction_set(f, v, x)
    assert oracle.is_good_subset(f, U, v)
    gs = GoodSubset.from_forest(f, U, v)
    assert gs.peel()[v] <= gs.L == ceil_log2(len(U) + 1)
    assert conservative_peeling(f, U)[v] <= gs.L


def test_check_good_subset_verdicts():
    f = generate("path", 9)
    assert check_good_subset(f, range(9), 4)
    assert not check_good_subset(f, {3, 4, 5}, 4)
    assert not check_good_subset(f, {3, 5}, 4)
    assert check_good_subset(f, {0}, 0)
    assert not check_good_subset(f, {4}, 4)


# -- subset collection and SubTreeRC ---------------------------------------------

def test_subtree_rc_single_subset_equals_peeling():
    f = generate("path", 12)
    assert subtree_rc(f, [GoodSubset.from_forest(f, range(12), 0)]) == conservative_peeling(f, range(12))


def test_subtree_rc_takes_the_minimum():
    f = generate("star", 5)
    whole = GoodSubset.from_forest(f, range(5), 0)  # centre peels at layer 2
    leaf = GoodSubset.from_forest(f, {0}, 0)  # centre alone never peels
    lay = subtree_rc(f, [whole, leaf])
    assert lay[0] == 2
    # node 1 peels at layer 1 in both subsets that contain it
    assert subtree_rc(f, [whole, GoodSubset.from_forest(f, {1, 0}, 1)])[1] == 1


def test_subtree_rc_modes_agree():
    f = generate("random_tree", 200, 4)
    col = good_subset_collection(f, non_binding(200, 8))
    direct = subtree_rc(f, col.subsets)
    sim = MpcSim(MpcConfig(n=200))
    assert subtree_rc(f, col.subsets, sim) == direct
    assert sim.ledger.rounds == sim.cfg.primitive_rounds


@pytest.mark.parametrize("kind", ["path", "star", "caterpillar", "balanced_binary", "random_tree", "random_forest"])
@pytest.mark.parametrize("x", [2, 8])
def test_collection_covers_small_subtrees(kind, x):
    n = 150
    f = generate(kind, n, 2)
    cfg = non_binding(n, 32, subtree_bound=x)
    col = good_subset_collection(f, cfg)
    for u in col.subsets:
        assert check_good_subset(f, u.nodes, u.center), u.center
        assert len(u.nodes) <= cfg.cap3
    assert col.total_size <= 2 * (col.k + 1) ** 2 * n
    lay = subtree_rc(f, col.subsets)
    assert validate_strict_h(f, lay)
    flags = subtree_membership(f, x)
    assert all(lay[v] != INF for v in range(n) if flags[v])


def test_collection_on_caterpillar_legs():
    f = generate("caterpillar", 60, 1)
    lay = subtree_rc(f, good_subset_collection(f, non_binding(60, 4, subtree_bound=1)).subsets)
    for v in range(f.n):
        if f.degree(v) == 1:
            assert lay[v] != INF


def test_collection_single_node():
    col = good_subset_collection(build_forest([], 1), MpcConfig(n=1))
    assert [(u.center, u.nodes) for u in col.subsets] == [(0, (0,))]


def test_collection_endpoint_of_a_path():
    f = generate("path", 20)
    col = good_subset_collection(f, non_binding(20, 8))
    centers = {u.center: u for u in col.subsets}
    assert 0 in centers
    for u in col.subsets:
        assert oracle.is_good_subset(f, set(u.nodes), u.center)


def test_collection_k_is_clamped():
    assert collection_k(1024, MpcConfig(n=1024, k_param=2000, epsilon_capacity=5000)) == 1000
    assert collection_k(1024, MpcConfig(n=1024)) == MpcConfig(n=1024).k_param


@settings(max_examples=60, deadline=None)
@given(forests(max_nodes=50), st.integers(1, 6))
def test_collection_subsets_are_good_at_any_radius(f, k):
    cfg = MpcConfig(n=max(f.n, 1), k_param=k, epsilon_capacity=k + 2)
    for u in good_subset_collection(f, cfg).subsets:
        assert oracle.is_good_subset(f, set(u.nodes), u.center)


# -- the driver ------------------------------------------------------------------

def test_driver_path_of_seven():
    f = generate("path", 7)
    dec = strict_h_decomp(f, MpcConfig(n=7))
    assert validate_strict_h(f, dec.layering) and validate_complete(dec.layering)
    assert all(a <= 2 * dec.offset for a in dec.layering)


def test_driver_perfect_binary_tree():
    f = generate("balanced_binary", 1023)
    dec = strict_h_decomp(f, MpcConfig(n=1023))
    assert validate_strict_h(f, dec.layering) and validate_complete(dec.layering)
    assert dec.layering.max_layer <= (math.ceil(10 / 0.5) + 1) * (ceil_log2(1024) + 1)
    assert dec.layer_bound == layer_bound(1023, 0.5)


def test_driver_single_node_and_empty():
    dec = strict_h_decomp(build_forest([], 1), MpcConfig(n=1))
    assert dec.layering[0] == dec.offset + 1
    assert dec.records[0].from_subsets == 1
    assert strict_h_decomp(build_forest([], 0), MpcConfig(n=1)).layering == Layering(())


@settings(max_examples=40, deadline=None)
@given(forests(max_nodes=80), st.sampled_from([0.25, 0.5, 0.75]))
def test_driver_is_valid_complete_and_bounded(f, delta):
    cfg = MpcConfig(n=max(f.n, 1), delta=delta)
    dec = strict_h_decomp(f, cfg)
    assert validate_strict_h(f, dec.layering)
    assert validate_complete(dec.layering)
    assert dec.layering.max_layer <= layer_bound(f.n, delta)
    assert dec.iterations == math.ceil(10 / delta)


def test_driver_reports_a_stalled_run(monkeypatch):
    # a driver whose removal steps make no progress must not return silently
    import forestmpc.hdecomp as hd

    monkeypatch.setattr(hd, "_remove_pivots_and_leaves", lambda f, alive, sim, phase: (set(), set()))
    monkeypatch.setattr(hd, "subtree_rc", lambda f, subsets, sim=None, phase="": Layering.unassigned(f.n))
    f = generate("path", 10)
    with pytest.raises(IncompleteDecomposition):
        hd.strict_h_decomp(f, MpcConfig(n=10))
    partial = hd.strict_h_decomp(f, MpcConfig(n=10), require_complete=False)
    assert partial.layering.unassigned_nodes() == list(range(10))


@pytest.mark.parametrize("kind", ["path", "caterpillar", "balanced_binary", "random_tree", "random_forest", "star"])
@pytest.mark.parametrize("seed", [1, 2, 3])
def test_driver_iterations_contain_a_rake_compress_step(kind, seed):
    # with exploration radius and capacities that cover the subsets' 3L balls,
    # each iteration removes at least what one exact step with x and ell = 3 removes
    n = 200
    f = generate(kind, n, seed)
    cfg = non_binding(n, 32)
    dec = strict_h_decomp(f, cfg, keep_sets=True)
    for rec, nxt in zip(dec.records, dec.records[1:] + [None]):
        alive = set(rec.alive_nodes)
        if not alive:
            break
        sub, old = f.induced(alive)
        survivors = {old[a] for a in generalized_rake_compress_step(sub, cfg.subtree_bound, 3)}
        after = set(nxt.alive_nodes) if nxt else set()
        assert after <= survivors


# -- rake and compress -----------------------------------------------------------

def test_rake_compress_examples():
    assert generalized_rake_compress_step(generate("path", 40), 1, 1) == set()
    assert generalized_rake_compress_step(generate("star", 10), 1, 3) == set()
    with pytest.raises(ValueError):
        generalized_rake_compress_step(generate("path", 3), 0, 1)


@settings(max_examples=60)
@given(forests(max_nodes=40), st.sampled_from([1, 2, 4]), st.sampled_from([1, 3]))
def test_rake_compress_matches_oracle_and_bound(f, x, ell):
    survivors = generalized_rake_compress_step(f, x, ell)
    assert survivors == oracle.rake_compress_exact(f, x, ell)
    for comp in {f.component_of(v) for v in f.nodes()}:
        members = [v for v in f.nodes() if f.component_of(v) == comp]
        kept = sum(1 for v in members if v in survivors)
        assert kept <= rake_compress_bound(len(members), x, ell)


# -- optimal-space preprocessing -------------------------------------------------

def test_preprocess_examples():
    f = generate("path", 100)
    pre = optimal_space_preprocess(f, 1)
    assert pre.residual.n <= 100 / (1 + 1 / 3)
    same = optimal_space_preprocess(f, 0)
    assert same.residual == f and same.layering == Layering.unassigned(100)
    tree = generate("balanced_binary", 1023)
    pre = optimal_space_preprocess(tree, 4)
    assert pre.residual.n < 1023 / 16
    with pytest.raises(ValueError):
        optimal_space_preprocess(f, -1)


def test_default_preprocess_iterations():
    assert default_preprocess_iterations(2 ** 16) == 4 * 4
    assert default_preprocess_iterations(2) == 4


@settings(max_examples=40, deadline=None)
@given(forests(max_nodes=80), st.integers(0, 4))
def test_preprocess_then_decompose_is_strict(f, iterations):
    pre = optimal_space_preprocess(f, iterations)
    assert validate_strict_h(f, pre.layering)
    assert pre.remaining == sorted(pre.remaining, reverse=True)
    rest = strict_h_decomp(pre.residual, MpcConfig(n=max(f.n, 1))).layering
    combined = combine_preprocessed(pre, rest)
    assert validate_strict_h(f, combined) and validate_complete(combined)


def test_preprocess_shrinks_by_the_rake_compress_factor():
    rng = random.Random(11)
    for _ in range(30):
        n = rng.randint(2, 400)
        f = generate("random_tree", n, rng.randrange(10 ** 6))
        pre = optimal_space_preprocess(f, 1)
        assert pre.residual.n <= rake_compress_bound(n, 1, 3)
