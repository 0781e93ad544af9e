"""Brute-force reference implementations used by the test suite.

Nothing here imports the algorithm modules; only :class:`Forest` is shared.
Everything favours obviousness over speed, and the exhaustive enumerators
refuse inputs above :data:`ENUMERATION_LIMIT` nodes.
"""
from __future__ import annotations

import itertools
import math
from collections import deque
from typing import Iterator, Sequence

from .forest import Forest

INF = math.inf
ENUMERATION_LIMIT = 10


class SizeLimit(ValueError):
    pass


def _require_small(f: Forest, limit: int = ENUMERATION_LIMIT) -> None:
    if f.n > limit:
        raise SizeLimit(f"exhaustive enumeration capped at {limit} nodes, got {f.n}")


def _is_connected(f: Forest, nodes: set[int]) -> bool:
    if not nodes:
        return False
    start = next(iter(nodes))
    seen = {start}
    stack = [start]
    while stack:
        a = stack.pop()
        for b in f.adj[a]:
            if b in nodes and b not in seen:
                seen.add(b)
                stack.append(b)
    return seen == nodes


def _component_count(f: Forest, nodes: set[int]) -> int:
    seen: set[int] = set()
    count = 0
    for s in nodes:
        if s in seen:
            continue
        count += 1
        seen.add(s)
        stack = [s]
        while stack:
            a = stack.pop()
            for b in f.adj[a]:
                if b in nodes and b not in seen:
                    seen.add(b)
                    stack.append(b)
    return count


# -- enumeration ---------------------------------------------------------------

def connected_subsets(f: Forest) -> list[frozenset[int]]:
    """Every non-empty node set inducing a connected subgraph."""
    _require_small(f)
    out = []
    for mask in range(1, 1 << f.n):
        nodes = {v for v in range(f.n) if mask >> v & 1}
        if _is_connected(f, nodes):
            out.append(frozenset(nodes))
    return out


def subtrees(f: Forest, max_size: int | None = None) -> list[frozenset[int]]:
    """Connected induced subgraphs whose removal leaves at most one piece of their tree."""
    out = []
    for s in connected_subsets(f):
        if max_size is not None and len(s) > max_size:
            continue
        v = next(iter(s))
        component = {v} | set(f.distances_from(v))
        rest = component - s
        if _component_count(f, rest) <= 1:
            out.append(s)
    return out


def subtree_flags(f: Forest, x: int) -> list[bool]:
    flags = [False] * f.n
    for s in subtrees(f, x):
        for v in s:
            flags[v] = True
    return flags


def all_subsets(f: Forest) -> Iterator[frozenset[int]]:
    _require_small(f)
    for mask in range(1, 1 << f.n):
        yield frozenset(v for v in range(f.n) if mask >> v & 1)


def all_layerings(f: Forest, values: Sequence[float] = (1, 2, INF)) -> Iterator[tuple[float, ...]]:
    _require_small(f, 8)
    yield from itertools.product(values, repeat=f.n)


def all_trees(n: int) -> list[Forest]:
    """All labelled trees on ``n`` nodes via exhaustive Prüfer sequences."""
    from .forest import build_forest

    if n > 7:
        raise SizeLimit("labelled tree enumeration capped at 7 nodes")
    if n == 1:
        return [build_forest([], 1)]
    if n == 2:
        return [build_forest([(0, 1)], 2)]
    trees = []
    for seq in itertools.product(range(n), repeat=n - 2):
        degree = [1] * n
        for a in seq:
            degree[a] += 1
        edges = []
        for a in seq:
            leaf = min(v for v in range(n) if degree[v] == 1)
            edges.append((leaf, a))
            degree[leaf] -= 1
            degree[a] -= 1
        u, w = [v for v in range(n) if degree[v] == 1]
        edges.append((u, w))
        trees.append(build_forest(edges, n))
    return trees


# -- H-decompositions ----------------------------------------------------------

def peel_oracle(f: Forest) -> list[int]:
    """Classic peeling: layer i takes every remaining node of degree at most 2."""
    remaining = set(range(f.n))
    layer = [0] * f.n
    i = 0
    while remaining:
        i += 1
        peel = [v for v in remaining if sum(1 for w in f.adj[v] if w in remaining) <= 2]
        for v in peel:
            layer[v] = i
        remaining.difference_update(peel)
    return layer


def is_partial_h(f: Forest, layer: Sequence[float]) -> bool:
    for v in range(f.n):
        if layer[v] == INF:
            continue
        if sum(1 for w in f.adj[v] if layer[w] >= layer[v]) > 2:
            return False
    return True


def pivots(f: Forest, layer: Sequence[float]) -> set[int]:
    return {v for v in range(f.n) if layer[v] != INF and all(layer[v] >= layer[w] for w in f.adj[v])}


def is_strict_h(f: Forest, layer: Sequence[float]) -> bool:
    if not is_partial_h(f, layer):
        return False
    piv = pivots(f, layer)
    for v in range(f.n):
        if layer[v] == INF or v in piv:
            continue
        bad = [w for w in f.adj[v] if layer[w] > layer[v] or (layer[w] == layer[v] and w not in piv)]
        if len(bad) > 1:
            return False
    return True


def peeling_full_knowledge(f: Forest, subset: set[int] | frozenset[int]) -> list[float]:
    """Conservative peeling evaluated with the whole forest in view.

    Nodes outside ``subset`` are simply never assigned, so they sit in every
    ``V_{>=i}``.
    """
    U = set(subset)
    L = math.ceil(math.log2(len(U) + 1))
    layer = [INF] * f.n
    for i in range(1, L + 1):
        alive = {v for v in range(f.n) if layer[v] == INF}
        up = {v: [w for w in f.adj[v] if w in alive] for v in alive}
        piv = set()
        for v in alive & U:
            if not all(w in U for w in up[v]):
                continue
            if all(len(up[w]) <= 2 for w in up[v] + [v]):
                piv.add(v)
        chosen = set(piv)
        for v in alive & U:
            if len([w for w in up[v] if w not in piv]) <= 1:
                chosen.add(v)
        for v in chosen:
            layer[v] = i
    return layer


def is_good_subset(f: Forest, subset: set[int] | frozenset[int], center: int) -> bool:
    U = set(subset)
    if center not in U:
        return False
    if sum(1 for w in f.adj[center] if w not in U) > 1:
        return False
    L = math.ceil(math.log2(len(U) + 1))
    dist = f.distances_from(center, 3 * L)
    for w in U:
        if w != center and w in dist and any(y not in U for y in f.adj[w]):
            return False
    return True


def rake_compress_exact(f: Forest, x: int, ell: int) -> set[int]:
    """The three removal steps of one generalized rake-and-compress round."""
    # step 1: every node lying in a subtree of size <= x, by side sizes
    comp = [0] * f.n
    for v in range(f.n):
        comp[v] = len(f.distances_from(v))
    survivors = set()
    for v in range(f.n):
        if comp[v] <= x:
            continue
        if not any(small_side(f, v, u) <= x for u in f.adj[v]):
            survivors.add(v)
    # step 2: maximal degree-2 runs (degrees in the survivor forest) of >= ell nodes
    deg = {v: sum(1 for w in f.adj[v] if w in survivors) for v in survivors}
    two = {v for v in survivors if deg[v] == 2}
    seen: set[int] = set()
    for s in two:
        if s in seen:
            continue
        run = {s}
        stack = [s]
        while stack:
            a = stack.pop()
            for b in f.adj[a]:
                if b in two and b not in run:
                    run.add(b)
                    stack.append(b)
        seen |= run
        if len(run) >= ell:
            survivors -= run
    # step 3: nodes of degree <= 1 in what is left
    return {v for v in survivors if sum(1 for w in f.adj[v] if w in survivors) > 1}


# -- exploration ---------------------------------------------------------------

def k_ball_in_direction(f: Forest, v: int, x: int, k: int) -> set[int]:
    """Nodes within distance ``k`` of ``v`` whose path from ``v`` uses ``x``."""
    dist = {x: 1}
    queue = deque([x])
    while queue:
        a = queue.popleft()
        if dist[a] >= k:
            continue
        for b in f.adj[a]:
            if b != v and b not in dist:
                dist[b] = dist[a] + 1
                queue.append(b)
    return set(dist)


def small_side(f: Forest, v: int, u: int) -> int:
    """``|F_{v-/->u}|``: the part of v's component not reached through ``u``."""
    total = len(f.distances_from(v))
    return total - len(k_ball_in_direction(f, v, u, f.n))


# -- colorings and friends -----------------------------------------------------

def greedy_tree_color(f: Forest) -> list[int]:
    """Two-colour every component by BFS parity (colours 1 and 2)."""
    color = [0] * f.n
    for s in range(f.n):
        if color[s]:
            continue
        color[s] = 1
        queue = deque([s])
        while queue:
            a = queue.popleft()
            for b in f.adj[a]:
                if not color[b]:
                    color[b] = 3 - color[a]
                    queue.append(b)
    return color


def is_proper(f: Forest, color: Sequence[int]) -> bool:
    return all(color[u] != color[v] for u, v in f.edges())


def is_maximal_independent(f: Forest, chosen: set[int]) -> bool:
    for u, v in f.edges():
        if u in chosen and v in chosen:
            return False
    return all(v in chosen or any(w in chosen for w in f.adj[v]) for v in range(f.n))


def is_maximal_matching(f: Forest, matching: set[tuple[int, int]]) -> bool:
    covered: set[int] = set()
    edges = set(f.edges())
    for u, v in matching:
        a, b = min(u, v), max(u, v)
        if (a, b) not in edges or a in covered or b in covered:
            return False
        covered.update((a, b))
    return all(u in covered or v in covered for u, v in edges)
