"""Immutable forests, deterministic generators and exact structural queries.

Node identifiers are the dense integers ``0..n-1``. All queries are pure, so a
:class:`Forest` can be shared freely between node programs.
"""
from __future__ import annotations

import heapq
import random
from collections import deque
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Sequence

GENERATOR_KINDS = ("path", "star", "caterpillar", "balanced_binary", "random_tree", "random_forest")


class ForestError(ValueError):
    pass


class CycleDetected(ForestError):
    pass


class SelfLoop(ForestError):
    pass


class DuplicateEdge(ForestError):
    pass


class NodeOutOfRange(ForestError):
    pass


class NotANeighbor(ForestError):
    pass


class Disconnected(ForestError):
    pass


class SameNode(ForestError):
    pass


class ParseError(ForestError):
    pass


class UnionFind:
    """Disjoint sets over ``0..n-1`` with path halving and union by size."""

    def __init__(self, n: int):
        self.parent = list(range(n))
        self.size = [1] * n

    def find(self, a: int) -> int:
        parent = self.parent
        while parent[a] != a:
            parent[a] = parent[parent[a]]
            a = parent[a]
        return a

    def union(self, a: int, b: int) -> bool:
        ra, rb = self.find(a), self.find(b)
        if ra == rb:
            return False
        if self.size[ra] < self.size[rb]:
            ra, rb = rb, ra
        self.parent[rb] = ra
        self.size[ra] += self.size[rb]
        return True


class Forest:
    """Undirected simple forest with sorted adjacency tuples.

    Use :func:`build_forest` to construct one from an edge list; the
    constructor itself trusts its input.
    """

    __slots__ = ("n", "adj", "m", "_comp", "_comp_size")

    def __init__(self, n: int, adj: Sequence[Sequence[int]]):
        self.n = n
        self.adj: tuple[tuple[int, ...], ...] = tuple(tuple(a) for a in adj)
        self.m = sum(len(a) for a in self.adj) // 2
        self._comp: list[int] | None = None
        self._comp_size: list[int] | None = None

    def __repr__(self) -> str:
        return f"Forest(n={self.n}, m={self.m})"

    def __eq__(self, other: object) -> bool:
        return isinstance(other, Forest) and self.n == other.n and self.adj == other.adj

    def __hash__(self) -> int:
        return hash((self.n, self.adj))

    def nodes(self) -> range:
        return range(self.n)

    def neighbors(self, v: int) -> tuple[int, ...]:
        return self.adj[v]

    def degree(self, v: int) -> int:
        return len(self.adj[v])

    def degrees(self) -> list[int]:
        return [len(a) for a in self.adj]

    def edges(self) -> list[tuple[int, int]]:
        return [(u, v) for u in range(self.n) for v in self.adj[u] if u < v]

    def _components(self) -> None:
        comp = [-1] * self.n
        sizes = []
        for s in range(self.n):
            if comp[s] >= 0:
                continue
            cid = len(sizes)
            comp[s] = cid
            stack = [s]
            count = 0
            while stack:
                a = stack.pop()
                count += 1
                for b in self.adj[a]:
                    if comp[b] < 0:
                        comp[b] = cid
                        stack.append(b)
            sizes.append(count)
        self._comp = comp
        self._comp_size = sizes

    def component_of(self, v: int) -> int:
        if self._comp is None:
            self._components()
        return self._comp[v]

    def component_size(self, v: int) -> int:
        if self._comp is None:
            self._components()
        return self._comp_size[self._comp[v]]

    def component_count(self) -> int:
        if self._comp is None:
            self._components()
        return len(self._comp_size)

    def distances_from(self, source: int, limit: int | None = None) -> dict[int, int]:
        """BFS hop distances from ``source``, optionally truncated at ``limit``."""
        dist = {source: 0}
        queue = deque([source])
        while queue:
            a = queue.popleft()
            d = dist[a]
            if limit is not None and d >= limit:
                continue
            for b in self.adj[a]:
                if b not in dist:
                    dist[b] = d + 1
                    queue.append(b)
        return dist

    def induced(self, nodes: Iterable[int]) -> tuple["Forest", list[int]]:
        """Induced subforest on ``nodes``, relabelled in increasing id order.

        Returns the subforest and the list mapping new ids to old ids.
        """
        old = sorted(set(nodes))
        index = {v: i for i, v in enumerate(old)}
        adj = [[index[b] for b in self.adj[v] if b in index] for v in old]
        return Forest(len(old), adj), old


def build_forest(edges: Iterable[tuple[int, int]], n: int) -> Forest:
    """Validate ``edges`` on ``n`` nodes and return the forest they form."""
    if n < 0:
        raise NodeOutOfRange(f"negative node count {n}")
    adj: list[list[int]] = [[] for _ in range(n)]
    seen: set[tuple[int, int]] = set()
    uf = UnionFind(n)
    for u, v in edges:
        if not (0 <= u < n and 0 <= v < n):
            raise NodeOutOfRange(f"edge ({u}, {v}) outside 0..{n - 1}")
        if u == v:
            raise SelfLoop(f"self-loop at {u}")
        key = (u, v) if u < v else (v, u)
        if key in seen:
            raise DuplicateEdge(f"duplicate edge {key}")
        seen.add(key)
        if not uf.union(u, v):
            raise CycleDetected(f"edge {key} closes a cycle")
        adj[u].append(v)
        adj[v].append(u)
    for a in adj:
        a.sort()
    return Forest(n, adj)


def direction_set(f: Forest, v: int, x: int) -> set[int]:
    """All nodes whose path from ``v`` passes through the neighbor ``x``."""
    if x not in f.adj[v]:
        raise NotANeighbor(f"{x} is not adjacent to {v}")
    out = {x}
    stack = [x]
    while stack:
        a = stack.pop()
        for b in f.adj[a]:
            if b != v and b not in out:
                out.add(b)
                stack.append(b)
    return out


def route_toward(f: Forest, v: int, w: int) -> int:
    """The neighbor of ``v`` on the unique ``v``-``w`` path."""
    if v == w:
        raise SameNode(f"route from {v} to itself")
    parent = {w: w}
    queue = deque([w])
    while queue:
        a = queue.popleft()
        for b in f.adj[a]:
            if b not in parent:
                parent[b] = a
                if b == v:
                    return a
                queue.append(b)
    raise Disconnected(f"{v} and {w} lie in different components")


def side_sizes(f: Forest) -> list[dict[int, int]]:
    """``out[v][u] = |F_{v->u}|`` for every edge, restricted to v's component.

    One rooted traversal per component; O(n).
    """
    n = f.n
    size = [1] * n
    parent = [-1] * n
    seen = [False] * n
    out: list[dict[int, int]] = [dict() for _ in range(n)]
    for root in range(n):
        if seen[root]:
            continue
        order = []
        seen[root] = True
        stack = [root]
        while stack:
            a = stack.pop()
            order.append(a)
            for b in f.adj[a]:
                if not seen[b]:
                    seen[b] = True
                    parent[b] = a
                    stack.append(b)
        for a in reversed(order):
            if parent[a] >= 0:
                size[parent[a]] += size[a]
        total = len(order)
        for a in order:
            for b in f.adj[a]:
                out[a][b] = size[b] if parent[b] == a else total - size[a]
    return out


def subtree_membership(f: Forest, x: int) -> list[bool]:
    """Flag every node lying in some subtree with at most ``x`` nodes."""
    sides = side_sizes(f)
    flags = []
    for v in range(f.n):
        comp = f.component_size(v)
        if comp <= x:
            flags.append(True)
            continue
        flags.append(any(comp - s <= x for s in sides[v].values()))
    return flags


@dataclass(frozen=True)
class ImportanceReport:
    important: tuple[bool, ...]
    witness: tuple[int | None, ...]
    threshold: int

    def important_nodes(self) -> list[int]:
        return [v for v, flag in enumerate(self.important) if flag]


def compute_importance(f: Forest, threshold: int) -> ImportanceReport:
    """A node is important when some neighbor leaves it a small side.

    The witness is the neighbor ``u`` minimising ``|F_{v-/->u}|`` (ties to the
    smaller id). Isolated nodes count as important without a witness.
    """
    sides = side_sizes(f)
    important = []
    witness: list[int | None] = []
    for v in range(f.n):
        if not f.adj[v]:
            important.append(True)
            witness.append(None)
            continue
        comp = f.component_size(v)
        best = min(f.adj[v], key=lambda u: (comp - sides[v][u], u))
        if comp - sides[v][best] <= threshold:
            important.append(True)
            witness.append(best)
        else:
            important.append(False)
            witness.append(None)
    return ImportanceReport(tuple(important), tuple(witness), threshold)


def _prufer_decode(seq: Sequence[int], n: int) -> list[tuple[int, int]]:
    degree = [1] * n
    for a in seq:
        degree[a] += 1
    leaves = [v for v in range(n) if degree[v] == 1]
    heapq.heapify(leaves)
    edges = []
    for a in seq:
        leaf = heapq.heappop(leaves)
        edges.append((leaf, a))
        degree[a] -= 1
        if degree[a] == 1:
            heapq.heappush(leaves, a)
    u, w = heapq.heappop(leaves), heapq.heappop(leaves)
    edges.append((u, w))
    return edges


def generate(kind: str, n: int, seed: int = 0) -> Forest:
    """Deterministic forest generators; ``seed`` only matters for random kinds."""
    if n < 0:
        raise ValueError("n must be non-negative")
    rng = random.Random(seed)
    if kind == "path":
        edges = [(i, i + 1) for i in range(n - 1)]
    elif kind == "star":
        edges = [(0, i) for i in range(1, n)]
    elif kind == "balanced_binary":
        edges = [((i - 1) // 2, i) for i in range(1, n)]
    elif kind == "caterpillar":
        spine = max(1, (n + 2) // 3) if n else 0
        edges = [(i, i + 1) for i in range(spine - 1)]
        edges += [(rng.randrange(spine), i) for i in range(spine, n)]
    elif kind == "random_tree":
        if n <= 2:
            edges = [(0, 1)] if n == 2 else []
        else:
            edges = _prufer_decode([rng.randrange(n) for _ in range(n - 2)], n)
    elif kind == "random_forest":
        tree = generate("random_tree", n, seed)
        edges = [e for e in tree.edges() if rng.random() >= 0.1]
    else:
        raise ValueError(f"unknown forest kind {kind!r}; expected one of {GENERATOR_KINDS}")
    return build_forest(edges, n)


# -- edge-list text format ---------------------------------------------------

def format_edge_list(f: Forest) -> str:
    lines = [f"# nodes {f.n}"]
    lines += [f"{u} {v}" for u, v in f.edges()]
    return "\n".join(lines) + "\n"


def write_edge_list(f: Forest, path: str | Path) -> None:
    Path(path).write_text(format_edge_list(f))


def parse_edge_list(text: str) -> tuple[Forest, list[int] | None]:
    """Parse ``u v`` lines; ``#`` lines are comments except ``# nodes N``.

    Returns the forest and, when the ids in the file were not dense, the table
    mapping dense ids back to the original ones.
    """
    declared = None
    pairs = []
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.strip()
        if not line:
            continue
        if line.startswith("#"):
            parts = line[1:].split()
            if len(parts) == 2 and parts[0] == "nodes" and parts[1].isdigit():
                declared = int(parts[1])
            continue
        parts = line.split()
        if len(parts) != 2 or not all(p.isdigit() for p in parts):
            raise ParseError(f"line {lineno}: expected two non-negative ids, got {raw!r}")
        pairs.append((int(parts[0]), int(parts[1])))
    ids = {a for e in pairs for a in e}
    if declared is not None:
        return build_forest(pairs, declared), None
    n = max(ids) + 1 if ids else 0
    if len(ids) == n:
        return build_forest(pairs, n), None
    table = sorted(ids)
    index = {a: i for i, a in enumerate(table)}
    return build_forest([(index[a], index[b]) for a, b in pairs], len(table)), table


def read_edge_list(path: str | Path) -> tuple[Forest, list[int] | None]:
    return parse_edge_list(Path(path).read_text())
