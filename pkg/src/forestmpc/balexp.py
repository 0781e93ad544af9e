"""Balanced exponentiation with direction probing.

Every node ``v`` keeps a knowledge set ``S_v`` of validated tuples
``(v, r_v(w), w, r_w(v), d(v, w))``. In each iteration an active node probes
how much it would learn per direction, exponentiates over the allowed
directions, repairs asymmetric knowledge and re-evaluates which directions it
already knows completely up to radius ``k``. Important nodes end up knowing
their ``k``-ball in all directions but at most one.

Internally a knowledge set maps ``target -> (first_hop, last_hop, dist)``.
"""
from __future__ import annotations

import json
import math
from bisect import bisect_right
from dataclasses import dataclass, field
from typing import Any, Callable, Iterable, Mapping, NamedTuple, TextIO

from .forest import Forest
from .mpcsim import MpcConfig, MpcSim, SpaceLedger, TUPLE_WORDS

Entry = tuple[int, int, int]  # (first_hop, last_hop, dist)


class KnowledgeTuple(NamedTuple):
    origin: int
    first_hop: int
    target: int
    last_hop: int
    dist: int


@dataclass
class KnowledgeSet:
    """``S_v`` plus the node's and its directions' state."""

    owner: int
    entries: dict[int, Entry]
    full: bool = False
    knowledgeable: bool = False
    blocked: set[int] = field(default_factory=set)
    complete: set[int] = field(default_factory=set)
    exp_counts: dict[int, int] = field(default_factory=dict)

    def __len__(self) -> int:
        return len(self.entries)

    def __contains__(self, w: int) -> bool:
        return w in self.entries

    @property
    def node_state(self) -> str:
        if self.full:
            return "full"
        return "knowledgeable" if self.knowledgeable else "active"

    def direction_state(self, x: int) -> str:
        if x in self.complete:
            return "knowledgeable"
        return "blocked" if x in self.blocked else "active"

    def targets(self) -> set[int]:
        return set(self.entries)

    def direction(self, x: int) -> set[int]:
        """``S_{v->x}``."""
        return {w for w, (first, _, _) in self.entries.items() if first == x and w != self.owner}

    def tuples(self) -> list[KnowledgeTuple]:
        v = self.owner
        return [KnowledgeTuple(v, a, w, b, d) for w, (a, b, d) in sorted(self.entries.items())]


def initial_entries(f: Forest, v: int) -> dict[int, Entry]:
    entries = {v: (v, v, 0)}
    for w in f.adj[v]:
        entries[w] = (w, v, 1)
    return entries


def init_knowledge(f: Forest) -> list[KnowledgeSet]:
    return [KnowledgeSet(v, initial_entries(f, v)) for v in f.nodes()]


def iteration_budget(k: int, extra: int = 10) -> tuple[int, int]:
    """``(J, J + extra)`` with ``J = ceil(log_{6/5}(k/5))`` clamped at zero."""
    if k <= 5:
        j = 0
    else:
        j = math.ceil(math.log(k / 5) / math.log(6 / 5) - 1e-9)
    return j, j + extra


def _entries_of(knowledge: Any, w: int) -> Mapping[int, Entry]:
    s = knowledge[w]
    return s.entries if isinstance(s, KnowledgeSet) else s


def answer_filter(entries_w: Mapping[int, Entry], w: int, away: int, radius: int) -> list[tuple[int, Entry]]:
    """``S_{w -/-> away} ∩ N^radius(w)`` as (target, entry) pairs.

    ``away`` is ``r_w(v)``; the owner ``w`` itself always qualifies.
    """
    return [(t, e) for t, e in entries_w.items() if e[0] != away and e[2] <= radius]


def compose(v_entry_w: Entry, w: int, t: int, w_entry_t: Entry) -> Entry:
    """Tuple composition: from ``t_v(w)`` and ``t_w(t)`` build ``t_v(t)``."""
    if t == w:
        return v_entry_w
    return (v_entry_w[0], w_entry_t[1], v_entry_w[2] + w_entry_t[2])


def exp(v: int, X: Iterable[int], k: int, knowledge: Any) -> dict[int, Entry]:
    """``Exp(X, k)`` evaluated against a snapshot of all knowledge sets.

    ``knowledge[w]`` may be a :class:`KnowledgeSet` or a raw entry mapping.
    """
    own = _entries_of(knowledge, v)
    allowed = set(X)
    out: dict[int, Entry] = {}
    for w, e in own.items():
        if w == v or e[0] not in allowed:
            continue
        for t, et in answer_filter(_entries_of(knowledge, w), w, e[1], k - e[2]):
            if t not in out:
                out[t] = compose(e, w, t, et)
    return out


@dataclass(frozen=True)
class ProbeResult:
    U: dict[int, int]
    blocked: frozenset[int]
    allowed: frozenset[int]
    excluded: int | None
    shortcut: frozenset[int]


class _DistanceIndex:
    """Per-node sorted distance lists, total and per first hop, for fast probing."""

    __slots__ = ("total", "by_dir")

    def __init__(self, entries: Mapping[int, Entry]):
        self.total = sorted(e[2] for e in entries.values())
        by_dir: dict[int, list[int]] = {}
        for t, e in entries.items():
            if e[2]:
                by_dir.setdefault(e[0], []).append(e[2])
        for lst in by_dir.values():
            lst.sort()
        self.by_dir = by_dir

    def count(self, away: int, radius: int) -> int:
        if radius < 0:
            return 0
        total = bisect_right(self.total, radius)
        lst = self.by_dir.get(away)
        return total - (bisect_right(lst, radius) if lst else 0)


def probe_values(v: int, f: Forest, k: int, knowledge: Any, cap3: int | None = None,
                 count: Callable[[int, int, int], int] | None = None) -> tuple[dict[int, int], set[int]]:
    """``U_{v->x}`` for every neighbor; directions hitting a node of degree
    above ``cap3`` get ``U = cap3`` without any query and are reported."""
    own = _entries_of(knowledge, v)
    U = {x: 0 for x in f.adj[v]}
    shortcut: set[int] = set()
    if cap3 is not None:
        for w, e in own.items():
            if w != v and len(f.adj[w]) > cap3:
                shortcut.add(e[0])
    for w, e in own.items():
        x = e[0]
        if w == v or x in shortcut:
            continue
        if count is None:
            U[x] += len(answer_filter(_entries_of(knowledge, w), w, e[1], k - e[2]))
        else:
            U[x] += count(w, e[1], k - e[2])
    for x in shortcut:
        U[x] = cap3
    return U, shortcut


def choose_directions(neighbors: Iterable[int], U: Mapping[int, int], k: int, cap_eps: int,
                      B_v: Iterable[int], shortcut: Iterable[int] = ()) -> ProbeResult:
    """Blocked set, argmax exclusion (ties toward the larger id) and allowed set."""
    nbrs = list(neighbors)
    blocked = {x for x in nbrs if U[x] > k * cap_eps} | set(B_v) | set(shortcut)
    excluded = None
    if not blocked and nbrs:
        excluded = max(nbrs, key=lambda x: (U[x], x))
    allowed = frozenset(x for x in nbrs if x not in blocked and x != excluded)
    return ProbeResult(dict(U), frozenset(blocked), allowed, excluded, frozenset(shortcut))


def probe_directions(v: int, f: Forest, cfg: MpcConfig, knowledge: Any,
                     B_v: Iterable[int] = ()) -> ProbeResult:
    k = cfg.k_param
    U, shortcut = probe_values(v, f, k, knowledge, cfg.cap3)
    return choose_directions(f.adj[v], U, k, cfg.epsilon_capacity, B_v, shortcut)


def induced_degrees(v: int, entries: Mapping[int, Entry]) -> dict[int, int]:
    """Degrees in ``G[S_v]``: edge ``{a, r_a(v)}`` whenever both are stored."""
    deg = dict.fromkeys(entries, 0)
    for a, (_, last, _) in entries.items():
        if a != v and last in deg:
            deg[a] += 1
            deg[last] += 1
    return deg


def complete_directions(v: int, entries: Mapping[int, Entry], degree_of: Callable[[int], int],
                        k: int, neighbors: Iterable[int], radius: int | None = None) -> set[int]:
    """Directions whose stored nodes within ``radius`` (default ``k-1``) all
    show their true degree in ``G[S_v]``; with ``radius=None`` this is exactly
    ``G^k_{v->x} ⊆ S_v``."""
    limit = k - 1 if radius is None else radius
    gdeg = induced_degrees(v, entries)
    bad: set[int] = set()
    for a, (first, _, d) in entries.items():
        if a != v and d <= limit and gdeg[a] != degree_of(a):
            bad.add(first)
    return {x for x in neighbors if x not in bad and x in entries}


def degree_matching_completeness(v: int, x: int, S_v: Mapping[int, Entry] | KnowledgeSet,
                                 f: Forest, k: int) -> bool:
    entries = S_v.entries if isinstance(S_v, KnowledgeSet) else S_v
    return x in complete_directions(v, entries, f.degree, k, [x])


@dataclass
class BEResult:
    knowledge: list[KnowledgeSet]
    ledger: SpaceLedger
    J: int
    iterations: int
    manual_blocks: list[tuple[int, int, int]]
    total_sizes: list[int]

    def important_unknowledgeable(self, important: Iterable[int]) -> list[int]:
        return [v for v in important if not self.knowledge[v].knowledgeable]


def balanced_exponentiation(
    f: Forest,
    cfg: MpcConfig,
    sim: MpcSim | None = None,
    *,
    iterations: int | None = None,
    trace: TextIO | None = None,
    observer: Callable[[int, list[KnowledgeSet]], None] | None = None,
    phase: str = "balexp",
) -> BEResult:
    """Run the iteration loop; ``observer(j, knowledge)`` sees the state after
    iteration ``j`` (``j = 0`` is the initialisation)."""
    if sim is None:
        sim = MpcSim(cfg, account=False)
    k = cfg.k_param
    cap_eps, cap3 = cfg.epsilon_capacity, cfg.cap3
    J, default_total = iteration_budget(k, cfg.extra_iterations)
    total = default_total if iterations is None else iterations
    n = f.n
    deg = f.degrees()
    know = init_knowledge(f)
    known_deg: list[set[int]] = [set() for _ in range(n)]
    manual_blocks: list[tuple[int, int, int]] = []

    def machine_words() -> list[int]:
        return [TUPLE_WORDS * len(s.entries) + 1 + deg[v] for v, s in enumerate(know)]

    assignment = sim.store(machine_words(), f"{phase}.store")

    def machine_of(v: int) -> int:
        return assignment.first_machine[v] if assignment is not None else v

    def span_of(v: int) -> int:
        return assignment.span[v] if assignment is not None else 1

    def learn_degrees(nodes: Iterable[int]) -> None:
        queries = []
        for v in nodes:
            s = know[v]
            for w in s.entries:
                if w not in known_deg[v]:
                    queries.append((w, v, None))
        sim.exchange(
            queries, lambda w: (), answer=lambda w, _: deg[w], reply_words=lambda r: 1,
            asker_machine=machine_of, target_machine=machine_of, span=span_of, phase=f"{phase}.degree",
        )
        for w, v, _ in queries:
            known_deg[v].add(w)

    def update_complete(nodes: Iterable[int]) -> None:
        for v in nodes:
            s = know[v]
            s.complete = complete_directions(v, s.entries, deg.__getitem__, k, f.adj[v])
            if len(s.complete) >= deg[v] - 1:
                s.knowledgeable = True

    everyone = range(n)
    learn_degrees(everyone)
    update_complete(everyone)
    sizes = [sum(len(s) for s in know)]
    if observer is not None:
        observer(0, know)
    _trace(trace, 0, know)

    for j in range(1, total + 1):
        for s in know:
            if len(s.entries) > cap3:
                s.full = True
        active = [v for v in everyone if not know[v].full and not know[v].knowledgeable]
        snapshot = [s.entries for s in know]
        index: dict[int, _DistanceIndex] = {}

        def count(w: int, away: int, radius: int) -> int:
            ix = index.get(w)
            if ix is None:
                ix = index[w] = _DistanceIndex(snapshot[w])
            return ix.count(away, radius)

        # probing
        probe_queries = []
        shortcuts: dict[int, set[int]] = {}
        for v in active:
            own = snapshot[v]
            shortcut = shortcuts[v] = {e[0] for w, e in own.items() if w != v and deg[w] > cap3}
            for w, e in own.items():
                if w != v and e[0] not in shortcut:
                    probe_queries.append((w, v, (e[1], k - e[2])))
        replies = sim.exchange(
            probe_queries, lambda w: snapshot[w], answer=lambda w, q: count(w, q[0], q[1]),
            reply_words=lambda r: 1, degree=deg.__getitem__,
            asker_machine=machine_of, target_machine=machine_of, span=span_of, phase=f"{phase}.probe",
        )
        U_acc: dict[int, dict[int, int]] = {v: {x: 0 for x in f.adj[v]} for v in active}
        for (w, v, _), r in zip(probe_queries, replies):
            U_acc[v][snapshot[v][w][0]] += r
        results: dict[int, ProbeResult] = {}
        for v in active:
            shortcut = shortcuts[v]
            U = {x: (cap3 if x in shortcut else U_acc[v][x]) for x in f.adj[v]}
            results[v] = choose_directions(f.adj[v], U, k, cap_eps, know[v].blocked, shortcut)
            know[v].blocked = set(results[v].blocked)

        # exponentiation, after re-packing so every machine has room for its replies
        if sim.account:
            words = machine_words()
            for v in active:
                words[v] += TUPLE_WORDS * sum(results[v].U[x] for x in results[v].allowed)
            sim.charge(f"{phase}.rebalance")
            assignment = sim.store(words, f"{phase}.rebalance")
        exp_queries = []
        for v in active:
            allowed = results[v].allowed
            for w, e in snapshot[v].items():
                if w != v and e[0] in allowed:
                    exp_queries.append((w, v, (e[1], k - e[2])))
        replies = sim.exchange(
            exp_queries, lambda w: snapshot[w],
            answer=lambda w, q: answer_filter(snapshot[w], w, q[0], q[1]),
            degree=deg.__getitem__, asker_machine=machine_of, target_machine=machine_of, span=span_of,
            phase=f"{phase}.exp",
        )
        new_entries = {v: dict(snapshot[v]) for v in active}
        for (w, v, _), answer in zip(exp_queries, replies):
            ev = snapshot[v][w]
            target = new_entries[v]
            for t, et in answer:
                if t not in target:
                    target[t] = compose(ev, w, t, et)
        for v in active:
            know[v].entries = new_entries[v]
            counts = know[v].exp_counts
            for x in results[v].allowed:
                counts[x] = counts.get(x, 0) + 1

        # symmetry repair: w tells every v it stores about t_w(v)
        if sim.account:
            sim.sort([(v, w) for w, s in enumerate(know) for v in s.entries if v != w],
                     f"{phase}.symmetry", item_words=TUPLE_WORDS)
        else:
            sim.charge(f"{phase}.symmetry")
        pending: dict[int, dict[int, list[tuple[int, Entry]]]] = {}
        for w, s in enumerate(know):
            for v, (first, last, d) in s.entries.items():
                if v == w or know[v].full or w in know[v].entries:
                    continue
                # t_v(w) = (v, r_v(w), w, r_w(v), d) with r_v(w) = last, r_w(v) = first
                pending.setdefault(v, {}).setdefault(last, []).append((w, (last, first, d)))
        for v, by_dir in pending.items():
            s = know[v]
            sizes_by_dir: dict[int, int] = {}
            for t, e in s.entries.items():
                if t != v:
                    sizes_by_dir[e[0]] = sizes_by_dir.get(e[0], 0) + 1
            for x, additions in by_dir.items():
                if sizes_by_dir.get(x, 0) + len(additions) <= cap_eps:
                    for w, e in additions:
                        s.entries[w] = e
                else:
                    s.blocked.add(x)

        # state determination; only changed knowledge sets can change state
        touched = sorted(v for v in set(active) | set(pending) if not know[v].full)
        learn_degrees(touched)
        update_complete(touched)
        if j > J:
            for v in active:
                s = know[v]
                for b, c in s.exp_counts.items():
                    if c >= 3 and b not in s.complete and b not in s.blocked:
                        s.blocked.add(b)
                        manual_blocks.append((j, v, b))

        sizes.append(sum(len(s) for s in know))
        assignment = sim.store(machine_words(), f"{phase}.store")
        if observer is not None:
            observer(j, know)
        _trace(trace, j, know)

    return BEResult(know, sim.ledger, J, total, manual_blocks, sizes)


def _trace(out: TextIO | None, j: int, know: list[KnowledgeSet]) -> None:
    if out is None:
        return
    for s in know:
        out.write(json.dumps({
            "iteration": j, "node": s.owner, "size": len(s.entries),
            "state": s.node_state, "blocked": sorted(s.blocked),
        }) + "\n")
