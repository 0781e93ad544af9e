"""Layerings, their validators and the decomposition algorithms.

A layering maps every node to a positive integer or to ``INF``. The strict
decomposition driver combines three ingredients per round: conservative
peeling of good subsets (whose pointwise minimum stays strict), removal of
pivots of the remaining forest, and removal of the nodes of degree at most one
left after that.
"""
from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from typing import Iterable, Iterator, Sequence, TextIO

from .balexp import BEResult, KnowledgeSet, balanced_exponentiation, induced_degrees
from .forest import Forest, subtree_membership
from .mpcsim import MpcConfig, MpcSim, ceil_log2

INF = math.inf


class HDecompError(ValueError):
    pass


class DomainMismatch(HDecompError):
    pass


class EmptySubset(HDecompError):
    pass


class IncompleteDecomposition(HDecompError):
    pass


class FormatError(HDecompError):
    """An artifact file (layering, coloring, node or edge list) is malformed."""


# -- layerings -------------------------------------------------------------------

def _parse_layer(token: str) -> float:
    if token.lower() in ("inf", "infinity"):
        return INF
    if not token.isdigit() or int(token) < 1:
        raise FormatError(f"layer must be a positive integer or 'inf', got {token!r}")
    return int(token)


def _format_layer(value: float) -> str:
    return "inf" if value == INF else str(int(value))


@dataclass(frozen=True)
class Layering:
    """Per-node layer values; ``INF`` marks an unassigned node."""

    values: tuple[float, ...]

    @classmethod
    def unassigned(cls, n: int) -> "Layering":
        return cls((INF,) * n)

    @classmethod
    def of(cls, values: Iterable[float]) -> "Layering":
        out = []
        for a in values:
            if a != INF and (a != int(a) or a < 1):
                raise ValueError(f"layer values must be positive integers or INF, got {a}")
            out.append(INF if a == INF else int(a))
        return cls(tuple(out))

    def __len__(self) -> int:
        return len(self.values)

    def __getitem__(self, v: int) -> float:
        return self.values[v]

    def __iter__(self) -> Iterator[float]:
        return iter(self.values)

    @property
    def max_layer(self) -> int:
        return max((int(a) for a in self.values if a != INF), default=0)

    def unassigned_nodes(self) -> list[int]:
        return [v for v, a in enumerate(self.values) if a == INF]

    def histogram(self) -> dict[str, int]:
        counts: dict[str, int] = {}
        for a in self.values:
            key = _format_layer(a)
            counts[key] = counts.get(key, 0) + 1
        return dict(sorted(counts.items(), key=lambda kv: (kv[0] == "inf", int(kv[0]) if kv[0] != "inf" else 0)))

    def to_text(self) -> str:
        return "".join(f"{v} {_format_layer(a)}\n" for v, a in enumerate(self.values))

    def to_json(self) -> str:
        return json.dumps({"n": len(self.values), "layer": [_format_layer(a) for a in self.values]})

    @classmethod
    def from_text(cls, text: str, n: int) -> "Layering":
        values: list[float | None] = [None] * n
        for lineno, raw in enumerate(text.splitlines(), 1):
            line = raw.strip()
            if not line or line.startswith("#"):
                continue
            parts = line.split()
            if len(parts) != 2 or not parts[0].isdigit():
                raise FormatError(f"line {lineno}: expected 'node layer', got {raw!r}")
            v = int(parts[0])
            if v >= n:
                raise FormatError(f"line {lineno}: node {v} outside 0..{n - 1}")
            if values[v] is not None:
                raise FormatError(f"line {lineno}: node {v} listed twice")
            values[v] = _parse_layer(parts[1])
        missing = [v for v, a in enumerate(values) if a is None]
        if missing:
            raise FormatError(f"no layer given for node {missing[0]}")
        return cls(tuple(values))  # type: ignore[arg-type]

    @classmethod
    def from_json(cls, text: str, n: int) -> "Layering":
        try:
            data = json.loads(text)
            raw = data["layer"]
        except (ValueError, KeyError, TypeError) as exc:
            raise FormatError(f"not a layering document: {exc}") from None
        if len(raw) != n:
            raise FormatError(f"layering covers {len(raw)} nodes, forest has {n}")
        return cls(tuple(_parse_layer(str(a)) for a in raw))


@dataclass(frozen=True)
class Verdict:
    """Outcome of a validator; ``node`` is the first offending node, if any."""

    check: str
    ok: bool
    node: int | None = None
    reason: str = ""

    def __bool__(self) -> bool:
        return self.ok

    def to_dict(self) -> dict[str, object]:
        return {"check": self.check, "ok": self.ok, "node": self.node, "reason": self.reason}


def _require_domain(f: Forest, layer: Sequence[float]) -> None:
    if len(layer) != f.n:
        raise DomainMismatch(f"layering has {len(layer)} entries, forest has {f.n} nodes")


def validate_partial_h(f: Forest, layer: Sequence[float]) -> Verdict:
    _require_domain(f, layer)
    for v in range(f.n):
        own = layer[v]
        if own == INF:
            continue
        up = sum(1 for w in f.adj[v] if layer[w] >= own)
        if up > 2:
            return Verdict("partial-h", False, v, f"{up} neighbors at layer >= {_format_layer(own)}")
    return Verdict("partial-h", True)


def pivot_nodes(f: Forest, layer: Sequence[float]) -> set[int]:
    return {v for v in range(f.n) if layer[v] != INF and all(layer[v] >= layer[w] for w in f.adj[v])}


def validate_strict_h(f: Forest, layer: Sequence[float]) -> Verdict:
    partial = validate_partial_h(f, layer)
    if not partial:
        return Verdict("strict-h", False, partial.node, partial.reason)
    piv = pivot_nodes(f, layer)
    for v in range(f.n):
        own = layer[v]
        if own == INF or v in piv:
            continue
        bad = [w for w in f.adj[v] if layer[w] > own or (layer[w] == own and w not in piv)]
        if len(bad) > 1:
            return Verdict("strict-h", False, v, f"non-pivot with {len(bad)} higher or same-layer non-pivot neighbors")
    return Verdict("strict-h", True)


def validate_complete(layer: Sequence[float]) -> Verdict:
    for v, a in enumerate(layer):
        if a == INF:
            return Verdict("complete", False, v, "layer is inf")
    return Verdict("complete", True)


def min_combine(l1: Sequence[float], l2: Sequence[float]) -> Layering:
    if len(l1) != len(l2):
        raise DomainMismatch(f"layerings cover {len(l1)} and {len(l2)} nodes")
    return Layering(tuple(min(a, b) for a, b in zip(l1, l2)))


# -- conservative peeling ---------------------------------------------------------

def peel_induced(sub: Forest, true_degree: Sequence[int]) -> list[float]:
    """Conservative peeling seeing only ``F[U]`` and each member's degree in F.

    Neighbors outside the subset are never peeled, so node ``a`` always has
    ``true_degree[a] - deg_{F[U]}(a)`` of them in every ``V_{>=i}``.
    """
    n = sub.n
    adj = sub.adj
    outside = [true_degree[a] - len(adj[a]) for a in range(n)]
    if any(c < 0 for c in outside):
        raise ValueError("true degree below induced degree")
    rounds = ceil_log2(n + 1)
    layer: list[float] = [INF] * n
    alive = [a for a in range(n)]
    for i in range(1, rounds + 1):
        if not alive:
            break
        up = {a: outside[a] + sum(1 for b in adj[a] if layer[b] == INF) for a in alive}
        piv = {
            a for a in alive
            if outside[a] == 0 and up[a] <= 2 and all(up[b] <= 2 for b in adj[a] if layer[b] == INF)
        }
        chosen = [
            a for a in alive
            if a in piv or outside[a] + sum(1 for b in adj[a] if layer[b] == INF and b not in piv) <= 1
        ]
        for a in chosen:
            layer[a] = i
        alive = [a for a in alive if layer[a] == INF]
    return layer


def conservative_peeling(f: Forest, U: Iterable[int], deg_F: Sequence[int] | None = None) -> Layering:
    """Peel the subset ``U`` of ``f``; nodes outside ``U`` stay ``INF``.

    Only ``F[U]`` and ``deg_F`` restricted to ``U`` are consulted.
    """
    nodes = sorted(set(U))
    if not nodes:
        raise EmptySubset("conservative peeling needs a non-empty subset")
    if deg_F is None:
        deg_F = f.degrees()
    sub, old = f.induced(nodes)
    local = peel_induced(sub, [deg_F[v] for v in old])
    layer: list[float] = [INF] * f.n
    for a, v in enumerate(old):
        layer[v] = local[a]
    return Layering(tuple(layer))


# -- good subsets ------------------------------------------------------------------

@dataclass(frozen=True)
class GoodSubset:
    """A subset together with its induced edges and the true degrees of its
    members: everything a machine needs to peel it without communication."""

    center: int
    nodes: tuple[int, ...]
    edges: tuple[tuple[int, int], ...]
    true_degree: tuple[int, ...]

    @property
    def L(self) -> int:
        return ceil_log2(len(self.nodes) + 1)

    @classmethod
    def from_forest(cls, f: Forest, nodes: Iterable[int], center: int) -> "GoodSubset":
        members = tuple(sorted(set(nodes)))
        inside = set(members)
        edges = tuple((a, b) for a in members for b in f.adj[a] if a < b and b in inside)
        return cls(center, members, edges, tuple(f.degree(a) for a in members))

    def local_view(self) -> tuple[Forest, list[int]]:
        index = {v: i for i, v in enumerate(self.nodes)}
        adj: list[list[int]] = [[] for _ in self.nodes]
        for a, b in self.edges:
            adj[index[a]].append(index[b])
            adj[index[b]].append(index[a])
        for row in adj:
            row.sort()
        return Forest(len(self.nodes), adj), list(self.nodes)

    def peel(self) -> dict[int, float]:
        sub, old = self.local_view()
        local = peel_induced(sub, self.true_degree)
        return {old[a]: local[a] for a in range(sub.n)}


def check_good_subset(f: Forest, nodes: Iterable[int], center: int) -> Verdict:
    """The three witness conditions, evaluated against the whole forest."""
    U = set(nodes)
    if center not in U:
        return Verdict("good-subset", False, center, "center outside the subset")
    missing = sum(1 for w in f.adj[center] if w not in U)
    if missing > 1:
        return Verdict("good-subset", False, center, f"center misses {missing} neighbors")
    radius = 3 * ceil_log2(len(U) + 1)
    for w, d in sorted(f.distances_from(center, radius).items()):
        if w != center and w in U and any(y not in U for y in f.adj[w]):
            return Verdict("good-subset", False, w, f"member at distance {d} has a neighbor outside")
    return Verdict("good-subset", True)


def _local_witness(v: int, entries: dict[int, tuple[int, int, int]], members: set[int],
                   degree: Sequence[int]) -> bool:
    """Witness check that reads only ``S_v`` and the learned degrees."""
    sub = {a: entries[a] for a in members}
    gdeg = induced_degrees(v, sub)
    if degree[v] - gdeg[v] > 1:
        return False
    radius = 3 * ceil_log2(len(members) + 1)
    return all(gdeg[a] == degree[a] for a, (_, _, d) in sub.items() if a != v and d <= radius)


def subset_from_knowledge(v: int, s: KnowledgeSet, degree: Sequence[int], k: int) -> GoodSubset | None:
    """Pick a good subset for ``v`` out of ``S_v``, or None.

    A direction is *exhausted* when every stored node in it shows its full
    degree inside ``G[S_v]``: then ``S_v`` holds that whole branch. Exhausted
    directions are taken whole, other complete directions up to radius ``k``.
    If the resulting set fails the local witness check, the exhausted
    directions alone are used, which always pass.
    """
    entries = s.entries
    deg_v = degree[v]
    if deg_v == 0:
        return GoodSubset(v, (v,), (), (0,))
    gdeg = induced_degrees(v, entries)
    not_exhausted = {e[0] for a, e in entries.items() if a != v and gdeg[a] != degree[a]}
    exhausted = {x for x in s.complete if x not in not_exhausted}
    partial = set(s.complete) - exhausted
    if len(exhausted) + len(partial) < deg_v - 1:
        return None
    members = {v} | {a for a, (first, _, d) in entries.items()
                     if first in exhausted or (first in partial and d <= k)}
    if not partial or not _local_witness(v, entries, members, degree):
        if len(exhausted) < deg_v - 1:
            return None
        members = {v} | {a for a, (first, _, _) in entries.items() if first in exhausted}
    edges = tuple(sorted(
        (min(a, entries[a][1]), max(a, entries[a][1]))
        for a in members if a != v and entries[a][1] in members
    ))
    ordered = tuple(sorted(members))
    return GoodSubset(v, ordered, edges, tuple(degree[a] for a in ordered))


@dataclass
class SubsetCollection:
    subsets: list[GoodSubset]
    exploration: BEResult
    k: int

    @property
    def total_size(self) -> int:
        return sum(len(u.nodes) for u in self.subsets)

    @property
    def max_size(self) -> int:
        return max((len(u.nodes) for u in self.subsets), default=0)


def collection_k(n: int, cfg: MpcConfig) -> int:
    cap = math.ceil(100 * math.log2(n)) if n > 1 else 1
    return max(1, min(cfg.k_param, cap, cfg.epsilon_capacity))


def good_subset_collection(f: Forest, cfg: MpcConfig, sim: MpcSim | None = None, *,
                           trace: TextIO | None = None, phase: str = "balexp") -> SubsetCollection:
    """Explore with balanced exponentiation and emit one subset per
    knowledgeable node that can certify it."""
    k = collection_k(cfg.n, cfg)
    run_cfg = cfg if k == cfg.k_param else cfg.with_overrides(k_param=k)
    result = balanced_exponentiation(f, run_cfg, sim, trace=trace, phase=phase)
    degree = f.degrees()
    subsets = []
    for v, s in enumerate(result.knowledge):
        if s.full or len(s.entries) > run_cfg.cap3 or not s.knowledgeable:
            continue
        u = subset_from_knowledge(v, s, degree, k)
        if u is not None:
            subsets.append(u)
    return SubsetCollection(subsets, result, k)


# -- SubTreeRC ---------------------------------------------------------------------

def subtree_rc(f: Forest, subsets: Sequence[GoodSubset], sim: MpcSim | None = None,
               phase: str = "subtree_rc") -> Layering:
    """Peel every subset locally and keep each node's smallest layer.

    In accounted mode the minimum is taken the way a cluster would: one
    ``(v, layer)`` tuple per assignment plus ``(v, INF)`` for every node,
    sorted, first tuple per node wins. Otherwise a dictionary merge is used.
    """
    tuples: list[tuple[int, float]] = []
    for u in subsets:
        for v, a in u.peel().items():
            if a != INF:
                tuples.append((v, a))
    if sim is not None and sim.account:
        items = [((v, a), None) for v, a in tuples] + [((v, INF), None) for v in range(f.n)]
        result = sim.sort(items, phase, item_words=2)
        layer: list[float] = [INF] * f.n
        seen = [False] * f.n
        for (v, a), _ in result.items:
            if not seen[v]:
                seen[v] = True
                layer[v] = a
        return Layering(tuple(layer))
    if sim is not None:
        sim.charge(phase)
    best: dict[int, float] = {}
    for v, a in tuples:
        if a < best.get(v, INF):
            best[v] = a
    return Layering(tuple(best.get(v, INF) for v in range(f.n)))


# -- pivot and degree-one removal ---------------------------------------------------

def _remove_pivots_and_leaves(f: Forest, alive: set[int], sim: MpcSim | None, phase: str) -> tuple[set[int], set[int]]:
    """Steps (b) and (c) on ``F[alive]``: returns (pivots, degree-<=1 nodes)."""
    deg = {v: sum(1 for w in f.adj[v] if w in alive) for v in alive}
    piv = {v for v in alive if deg[v] <= 2 and all(deg[w] <= 2 for w in f.adj[v] if w in alive)}
    rest = alive - piv
    low = {v for v in rest if sum(1 for w in f.adj[v] if w in rest) <= 1}
    if sim is not None:
        sim.neighbor_exchange(f, alive, f"{phase}.degrees")
        sim.neighbor_exchange(f, alive, f"{phase}.pivots")
        sim.neighbor_exchange(f, rest, f"{phase}.leaves")
    return piv, low


@dataclass
class IterationRecord:
    index: int
    alive_before: int
    from_subsets: int
    from_pivots: int
    from_leaves: int
    subsets: int
    subset_words: int
    alive_nodes: tuple[int, ...] = ()
    removed_by_subsets: tuple[int, ...] = ()


@dataclass
class Decomposition:
    layering: Layering
    offset: int
    iterations: int
    records: list[IterationRecord] = field(default_factory=list)

    @property
    def layer_bound(self) -> int:
        return (self.iterations + 1) * self.offset


def strict_h_decomp(f: Forest, cfg: MpcConfig, sim: MpcSim | None = None, *,
                    trace: TextIO | None = None, keep_sets: bool = False,
                    require_complete: bool = True) -> Decomposition:
    """Strict H-decomposition in ``ceil(10/delta)`` rounds of subset peeling
    followed by pivot and degree-one removal.

    The loop always runs its full length, so the number of charged rounds
    does not depend on the forest's shape. ``cfg.n`` (not ``f.n``) sets the
    subtree size and the exploration radius, which lets the driver run on a
    residual forest.
    """
    if sim is None:
        sim = MpcSim(cfg, account=False)
    offset = ceil_log2(f.n + 1) + 1
    rounds = math.ceil(10 / cfg.delta)
    layer: list[float] = [INF] * f.n
    records = []
    for i in range(1, rounds + 1):
        alive_nodes = [v for v in range(f.n) if layer[v] == INF]
        sub, old = f.induced(alive_nodes)
        sim.neighbor_exchange(f, alive_nodes, "strict_h.induce")
        collection = good_subset_collection(sub, cfg, sim, trace=trace)
        rc = subtree_rc(sub, collection.subsets, sim)
        by_subsets = []
        for a, value in enumerate(rc):
            if value != INF:
                layer[old[a]] = i * offset + value
                by_subsets.append(old[a])
        alive = {v for v in alive_nodes if layer[v] == INF}
        piv, low = _remove_pivots_and_leaves(f, alive, sim, "strict_h")
        for v in piv | low:
            layer[v] = (i + 1) * offset
        records.append(IterationRecord(
            i, len(alive_nodes), len(by_subsets), len(piv), len(low),
            len(collection.subsets), collection.total_size,
            tuple(alive_nodes) if keep_sets else (), tuple(sorted(by_subsets)) if keep_sets else (),
        ))
    result = Layering(tuple(layer))
    if require_complete and result.unassigned_nodes():
        left = result.unassigned_nodes()
        raise IncompleteDecomposition(f"{len(left)} nodes still unassigned after {rounds} rounds, e.g. {left[0]}")
    return Decomposition(result, offset, rounds, records)


# -- generalized rake and compress ---------------------------------------------------

def generalized_rake_compress_step(f: Forest, x: int, ell: int) -> set[int]:
    """Survivors of one exact step: drop every node in a subtree of at most
    ``x`` nodes, then every maximal degree-2 run of at least ``ell`` nodes,
    then every node of degree at most one."""
    if x < 1 or ell < 1:
        raise ValueError("x and ell must be at least 1")
    flags = subtree_membership(f, x)
    survivors = {v for v in range(f.n) if not flags[v]}
    deg = {v: sum(1 for w in f.adj[v] if w in survivors) for v in survivors}
    two = {v for v in survivors if deg[v] == 2}
    seen: set[int] = set()
    for s in sorted(two):
        if s in seen:
            continue
        run = [s]
        seen.add(s)
        head = 0
        while head < len(run):
            a = run[head]
            head += 1
            for b in f.adj[a]:
                if b in two and b not in seen:
                    seen.add(b)
                    run.append(b)
        if len(run) >= ell:
            survivors.difference_update(run)
    return {v for v in survivors if sum(1 for w in f.adj[v] if w in survivors) > 1}


def rake_compress_bound(size: int, x: int, ell: int) -> float:
    return size / (1 + (x + 1) / (2 * ell))


# -- optimal-space preprocessing ------------------------------------------------------

def default_preprocess_iterations(n: int, factor: int = 4) -> int:
    return ceil_log2(ceil_log2(max(n, 4))) * factor


@dataclass
class Preprocessed:
    layering: Layering
    residual: Forest
    residual_ids: list[int]
    iterations: int
    remaining: list[int]


def optimal_space_preprocess(f: Forest, iterations: int, sim: MpcSim | None = None) -> Preprocessed:
    """Assign layer ``t`` to the pivots and then the degree-<=1 nodes of what
    is left, for ``t = 1..iterations``."""
    if iterations < 0:
        raise ValueError("iterations must be non-negative")
    layer: list[float] = [INF] * f.n
    alive = set(range(f.n))
    remaining = [len(alive)]
    for t in range(1, iterations + 1):
        piv, low = _remove_pivots_and_leaves(f, alive, sim, "preprocess")
        for v in piv | low:
            layer[v] = t
        alive -= piv | low
        remaining.append(len(alive))
    residual, ids = f.induced(alive)
    return Preprocessed(Layering(tuple(layer)), residual, ids, iterations, remaining)


def combine_preprocessed(pre: Preprocessed, rest: Layering) -> Layering:
    """Lift a layering of the residual above the preprocessing layers."""
    layer = list(pre.layering.values)
    for a, v in enumerate(pre.residual_ids):
        layer[v] = rest[a] + pre.iterations if rest[a] != INF else INF
    return Layering(tuple(layer))
