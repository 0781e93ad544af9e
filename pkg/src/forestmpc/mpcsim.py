"""Round-synchronous simulation of the low-space MPC model.

Algorithms stay node-centric. Whenever they move data they go through an
:class:`MpcSim`, which packs nodes onto machines, charges rounds and checks
every machine's storage and per-round traffic against ``local_capacity``.
Violations are recorded on the :class:`SpaceLedger` rather than raised.
"""
from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Callable, Hashable, Iterable, Mapping, Protocol, Sequence

from .forest import Forest

TUPLE_WORDS = 5


class MpcError(RuntimeError):
    pass


class NonTermination(MpcError):
    pass


class UnanswerableTarget(MpcError):
    pass


class CapacityExceeded(MpcError):
    """Raised only by callers that choose to escalate a recorded violation."""


def ceil_pow(n: float, exponent: float) -> int:
    """``ceil(n ** exponent)`` robust to float noise such as 10000**0.25."""
    if n <= 0:
        return 0
    value = n ** exponent
    c = math.ceil(value)
    if c - 1 >= value * (1 - 1e-12):
        c -= 1
    return max(c, 1)


def ceil_log2(x: float) -> int:
    return 0 if x <= 1 else math.ceil(math.log2(x) - 1e-12)


@dataclass
class MpcConfig:
    """Machine size and algorithm capacities.

    Every fractional power of ``n`` is evaluated as a ceiling and may be
    overridden by an absolute integer; at desk-scale ``n`` the raw powers
    collapse below 2.
    """

    n: int
    delta: float = 0.5
    local_capacity: int | None = None
    k_param: int | None = None
    epsilon_capacity: int | None = None
    cap2: int | None = None
    cap3: int | None = None
    cap_answerable: int | None = None
    subtree_bound: int | None = None
    fanout: int | None = None
    primitive_rounds: int = 4
    extra_iterations: int = 10
    round_ceiling: int | None = None
    preprocess_factor: int = 4

    def __post_init__(self) -> None:
        if not 0 < self.delta < 1:
            raise ValueError(f"delta must lie in (0, 1), got {self.delta}")
        n, d = max(self.n, 1), self.delta
        if self.epsilon_capacity is None:
            self.epsilon_capacity = max(2, ceil_pow(n, d / 8))
        if self.k_param is None:
            self.k_param = max(1, min(math.ceil(100 * math.log2(n)) if n > 1 else 1, self.epsilon_capacity))
        k, eps = self.k_param, self.epsilon_capacity
        # The local-space arguments need n^{2e} >= k n^e and n^{3e} > k n^e + n^e;
        # ceilings at small n can break both, so the derived defaults restore them.
        if self.cap2 is None:
            self.cap2 = max(2, ceil_pow(n, 2 * d / 8), k * eps)
        if self.cap3 is None:
            self.cap3 = max(2, ceil_pow(n, 3 * d / 8), k * eps + eps + 2)
        if self.cap_answerable is None:
            self.cap_answerable = self.cap3 * self.cap2 + 1
        # Likewise a machine must fit one answerable knowledge set, which n^delta
        # dominates only for astronomically large n.
        if self.local_capacity is None:
            self.local_capacity = max(2, ceil_pow(n, d), TUPLE_WORDS * self.cap_answerable)
        if self.subtree_bound is None:
            self.subtree_bound = max(1, ceil_pow(n, d / 10))
        if self.fanout is None:
            self.fanout = max(2, ceil_pow(n, d / 2))
        if self.round_ceiling is None:
            self.round_ceiling = 64 * (ceil_log2(ceil_log2(max(n, 4))) + ceil_log2(max(self.k_param, 2)) + 8)
        if min(self.local_capacity, self.epsilon_capacity, self.cap2, self.cap3) < 2:
            raise ValueError("all capacities must be at least 2")
        if not 0 < self.k_param <= self.epsilon_capacity:
            raise ValueError(
                f"k_param={self.k_param} must satisfy 0 < k <= epsilon_capacity={self.epsilon_capacity}"
            )

    @property
    def tree_depth_bound(self) -> int:
        return math.ceil(2 / self.delta)

    def with_overrides(self, **kw: Any) -> "MpcConfig":
        fields = {k: getattr(self, k) for k in self.__dataclass_fields__}
        fields.update(kw)
        return MpcConfig(**fields)

    @classmethod
    def derived(cls, n: int, **overrides: Any) -> "MpcConfig":
        return cls(n=n, **{k: v for k, v in overrides.items() if v is not None})

    def to_dict(self) -> dict[str, Any]:
        return {k: getattr(self, k) for k in self.__dataclass_fields__}


_INT_KEYS = {
    "local_capacity", "k_param", "epsilon_capacity", "cap2", "cap3", "cap_answerable",
    "subtree_bound", "fanout", "primitive_rounds", "extra_iterations", "round_ceiling",
    "preprocess_factor",
}


def read_config_file(path: str | Path) -> dict[str, Any]:
    """Parse ``key=value`` lines (``#`` comments allowed) into config overrides."""
    out: dict[str, Any] = {}
    for lineno, raw in enumerate(Path(path).read_text().splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ValueError(f"{path}:{lineno}: expected key=value")
        key, value = (s.strip() for s in line.split("=", 1))
        key = key.replace("-", "_")
        if key == "k":
            key = "k_param"
        if key == "delta":
            out[key] = float(value)
        elif key in _INT_KEYS:
            out[key] = int(value)
        else:
            raise ValueError(f"{path}:{lineno}: unknown config key {key!r}")
    return out


@dataclass
class Violation:
    kind: str
    machine: int
    round: int
    words: int
    capacity: int
    phase: str

    def to_dict(self) -> dict[str, Any]:
        return dict(self.__dict__)


@dataclass
class SpaceLedger:
    """Rounds, space maxima and capacity violations of one simulated run."""

    local_capacity: int
    rounds: int = 0
    global_peak_words: int = 0
    machine_peak_words: int = 0
    max_sent_words: int = 0
    max_received_words: int = 0
    phase_rounds: dict[str, int] = field(default_factory=dict)
    violations: list[Violation] = field(default_factory=list)
    max_violations_kept: int = 1000
    violation_count: int = 0

    def charge(self, phase: str, rounds: int) -> None:
        self.rounds += rounds
        self.phase_rounds[phase] = self.phase_rounds.get(phase, 0) + rounds

    def _violate(self, kind: str, machine: int, words: int, phase: str) -> None:
        self.violation_count += 1
        if len(self.violations) < self.max_violations_kept:
            self.violations.append(Violation(kind, machine, self.rounds, words, self.local_capacity, phase))

    def observe_storage(self, loads: Sequence[int], phase: str) -> None:
        total = sum(loads)
        self.global_peak_words = max(self.global_peak_words, total)
        for machine, words in enumerate(loads):
            if words > self.machine_peak_words:
                self.machine_peak_words = words
            if words > self.local_capacity:
                self._violate("storage", machine, words, phase)

    def observe_traffic(self, sent: Mapping[int, int], received: Mapping[int, int], phase: str) -> None:
        for machine, words in sent.items():
            self.max_sent_words = max(self.max_sent_words, words)
            if words > self.local_capacity:
                self._violate("sent", machine, words, phase)
        for machine, words in received.items():
            self.max_received_words = max(self.max_received_words, words)
            if words > self.local_capacity:
                self._violate("received", machine, words, phase)

    @property
    def ok(self) -> bool:
        return self.violation_count == 0

    def to_dict(self) -> dict[str, Any]:
        return {
            "rounds": self.rounds,
            "global_peak_words": self.global_peak_words,
            "machine_peak_words": self.machine_peak_words,
            "max_sent_words": self.max_sent_words,
            "max_received_words": self.max_received_words,
            "local_capacity": self.local_capacity,
            "phase_rounds": dict(sorted(self.phase_rounds.items())),
            "violation_count": self.violation_count,
            "violations": [v.to_dict() for v in self.violations],
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True)


@dataclass
class MachineAssignment:
    """Consecutive packing of node payloads onto machines.

    A node whose payload exceeds one machine occupies a run of consecutive
    machines of its own.
    """

    first_machine: list[int]
    span: list[int]
    loads: list[int]

    @classmethod
    def pack(cls, words: Sequence[int], capacity: int) -> "MachineAssignment":
        first, span, loads = [], [], []
        current = -1
        for w in words:
            if w > capacity:
                need = -(-w // capacity)
                start = len(loads)
                for i in range(need):
                    loads.append(min(capacity, w - i * capacity))
                first.append(start)
                span.append(need)
                current = -1
                continue
            if current < 0 or loads[current] + w > capacity:
                loads.append(0)
                current = len(loads) - 1
            loads[current] += w
            first.append(current)
            span.append(1)
        return cls(first, span, loads)

    def machine_of(self, v: int) -> int:
        return self.first_machine[v]

    def spread(self, v: int, words: int) -> list[tuple[int, int]]:
        """Split ``words`` of traffic for ``v`` evenly over the machines it occupies."""
        return spread_words(self.first_machine[v], self.span[v], words)

    @property
    def machine_count(self) -> int:
        return len(self.loads)


@dataclass
class AggregationTree:
    """Constant-depth search/broadcast tree over consecutive machines."""

    leaves: list[int]
    levels: list[list[list[int]]]

    @property
    def depth(self) -> int:
        return len(self.levels)

    @property
    def max_children(self) -> int:
        return max((len(group) for level in self.levels for group in level), default=0)

    def links(self) -> list[list[tuple[int, list[int]]]]:
        """Per level, ``(parent, children)`` as machine ids; a group's first
        member stands for it on the level above."""
        reps = list(self.leaves)
        out = []
        for level in self.levels:
            out.append([(reps[g[0]], [reps[c] for c in g[1:]]) for g in level])
            reps = [reps[g[0]] for g in level]
        return out

    @classmethod
    def over(cls, leaves: Sequence[int], fanout: int) -> "AggregationTree":
        levels = []
        width = len(leaves)
        while width > 1:
            groups = [list(range(i, min(i + fanout, width))) for i in range(0, width, fanout)]
            levels.append(groups)
            width = len(groups)
        return cls(list(leaves), levels)


def spread_words(first: int, span: int, words: int) -> list[tuple[int, int]]:
    base, extra = divmod(words, span)
    return [(first + i, base + (1 if i < extra else 0)) for i in range(span) if base or i < extra]


def tree_depth(width: int, fanout: int) -> int:
    depth = 0
    while width > 1:
        width = -(-width // fanout)
        depth += 1
    return depth


@dataclass
class SortResult:
    items: list[Any]
    machine_of_item: list[int]
    machine_loads: list[int]
    key_trees: dict[Hashable, AggregationTree]
    global_tree: AggregationTree

    @property
    def machine_count(self) -> int:
        return len(self.machine_loads)


def mpc_sort(
    items: Sequence[tuple[Hashable, Any]],
    cfg: MpcConfig,
    ledger: SpaceLedger | None = None,
    *,
    item_words: int | Callable[[Any], int] = 1,
    phase: str = "sort",
) -> SortResult:
    """Stable sort by key, packed onto consecutive machines.

    Every key group spanning at least two machines gets an aggregation tree
    with fan-out at most ``cfg.fanout``.
    """
    order = sorted(range(len(items)), key=lambda i: items[i][0])
    cap = cfg.local_capacity
    sizes = [item_words if isinstance(item_words, int) else item_words(items[i]) for i in order]
    if ledger is not None and sum(sizes) > cap * max(1, cfg.n):
        ledger._violate("global", -1, sum(sizes), phase)
    placed = MachineAssignment.pack(sizes, cap)
    machine_of = placed.first_machine
    groups: dict[Hashable, list[int]] = {}
    for pos, i in enumerate(order):
        key = items[i][0]
        machines = groups.setdefault(key, [])
        if not machines or machines[-1] != machine_of[pos]:
            machines.append(machine_of[pos])
    trees = {k: AggregationTree.over(ms, cfg.fanout) for k, ms in groups.items() if len(ms) >= 2}
    result = SortResult(
        items=[items[i] for i in order],
        machine_of_item=list(machine_of),
        machine_loads=placed.loads,
        key_trees=trees,
        global_tree=AggregationTree.over(range(placed.machine_count), cfg.fanout),
    )
    if ledger is not None:
        ledger.charge(phase, cfg.primitive_rounds)
        ledger.observe_storage(placed.loads, phase)
    return result


def query_exchange(
    queries: Sequence[tuple[int, int, Any]],
    knowledge: Mapping[int, Sequence[Any]] | Callable[[int], Sequence[Any]],
    cfg: MpcConfig,
    ledger: SpaceLedger | None = None,
    *,
    answer: Callable[[int, Any], Any] | None = None,
    reply_words: Callable[[Any], int] | None = None,
    degree: Callable[[int], int] | None = None,
    asker_machine: Callable[[int], int] | None = None,
    target_machine: Callable[[int], int] | None = None,
    span: Callable[[int], int] | None = None,
    answer_limit: int | None = None,
    phase: str = "query",
) -> list[Any]:
    """Answer ``(target, asker, descriptor)`` queries against per-node knowledge.

    Simulates the sort-by-target protocol: each queried target ships its
    knowledge set once, queries are packed next to it, and groups spanning
    several machines receive the set through a broadcast tree. Replies go back
    to the asker's machine. A node occupying ``span(v)`` consecutive machines
    spreads its traffic over them. Returns replies aligned with ``queries``.
    """
    get = knowledge if callable(knowledge) else knowledge.__getitem__
    if answer is None:
        answer = lambda target, descriptor: get(target)  # noqa: E731
    if reply_words is None:
        reply_words = lambda r: TUPLE_WORDS * len(r) if hasattr(r, "__len__") else 1  # noqa: E731

    by_target: dict[int, int] = {}
    for target, _, _ in queries:
        by_target[target] = by_target.get(target, 0) + 1
    for target in by_target:
        if degree is not None and degree(target) > cfg.cap3:
            raise UnanswerableTarget(f"node {target} has degree {degree(target)} > cap3={cfg.cap3}")
        size = len(get(target))
        limit = cfg.cap_answerable if answer_limit is None else answer_limit
        if size > limit:
            raise UnanswerableTarget(f"node {target} holds {size} tuples > {limit}")

    replies = [answer(t, d) for t, _, d in queries]
    if ledger is None:
        return replies

    cap = cfg.local_capacity
    ship_of = {t: TUPLE_WORDS * len(get(t)) + 1 for t in by_target}
    reply_max: dict[int, int] = {}
    for (target, _, _), reply in zip(queries, replies):
        reply_max[target] = max(reply_max.get(target, 0), reply_words(reply))
    # a chunk's 3-word queries and their replies must fit next to the shipped set
    chunk_of = {t: max(1, (cap - ship_of[t]) // (3 + reply_max[t])) for t in by_target}
    # answering machines: each target's queries are cut into chunks that fit
    # next to one copy of its knowledge set
    first_leaf: dict[int, int] = {}
    next_machine = 0
    for t in sorted(by_target):
        first_leaf[t] = next_machine
        next_machine += -(-by_target[t] // chunk_of[t])
    seen: dict[int, int] = {}
    leaf_of_query = []
    for target, _, _ in queries:
        pos = seen.get(target, 0)
        seen[target] = pos + 1
        leaf_of_query.append(first_leaf[target] + pos // chunk_of[target])

    def stage(sent: dict[int, int], received: dict[int, int], name: str) -> None:
        ledger.observe_traffic(sent, received, f"{phase}.{name}")

    def add(table: dict[int, int], machine: int, words: int) -> None:
        table[machine] = table.get(machine, 0) + words

    def node_machine(fn: Callable[[int], int] | None, v: int) -> int:
        return fn(v) if fn is not None else v

    # a spanning asker deals its queries round-robin over its machines
    asked: dict[int, int] = {}
    asker_slot = []
    for _, asker, _ in queries:
        i = asked.get(asker, 0)
        asked[asker] = i + 1
        width = span(asker) if span is not None else 1
        asker_slot.append(node_machine(asker_machine, asker) + i % width)

    # stage 1: askers issue 3-word queries, sorted onto the answering machines
    sent, received = {}, {}
    for leaf, slot in zip(leaf_of_query, asker_slot):
        add(sent, slot, 3)
        add(received, leaf, 3)
    stage(sent, received, "issue")
    # stage 2: each queried node ships (w, S_w) to the first machine of its group
    sent, received = {}, {}
    for t in by_target:
        width = span(t) if span is not None else 1
        for machine, words in spread_words(node_machine(target_machine, t), width, ship_of[t]):
            add(sent, machine, words)
        add(received, first_leaf[t], ship_of[t])
    stage(sent, received, "ship")
    # stage 3: groups spanning several machines broadcast S_w down a tree,
    # one tree level per round, top level first
    levels: list[tuple[dict[int, int], dict[int, int]]] = []
    for t in by_target:
        leaves = -(-by_target[t] // chunk_of[t])
        if leaves < 2:
            continue
        fan = max(2, min(cfg.fanout, cap // ship_of[t]))
        tree = AggregationTree.over(range(first_leaf[t], first_leaf[t] + leaves), fan)
        for depth, level in enumerate(reversed(tree.links())):
            while len(levels) <= depth:
                levels.append(({}, {}))
            sent, received = levels[depth]
            for parent, children in level:
                add(sent, parent, ship_of[t] * len(children))
                for child in children:
                    add(received, child, ship_of[t])
    for sent, received in levels:
        stage(sent, received, "broadcast")
    # stage 4: replies travel back to the askers
    sent, received = {}, {}
    for leaf, slot, reply in zip(leaf_of_query, asker_slot, replies):
        words = reply_words(reply)
        add(sent, leaf, words)
        add(received, slot, words)
    stage(sent, received, "reply")
    ledger.charge(phase, cfg.primitive_rounds)
    return replies


class NodeProgram(Protocol):
    def init(self, v: int, forest: Forest) -> Any: ...

    def step(self, v: int, state: Any, inbox: list[tuple[int, Any]], round: int) -> tuple[Any, list[tuple[int, Any]], bool]: ...


def payload_words(payload: Any) -> int:
    if isinstance(payload, (tuple, list)):
        return sum(payload_words(p) for p in payload)
    if isinstance(payload, dict):
        return sum(1 + payload_words(p) for p in payload.values())
    return 1


def run_rounds(
    program: NodeProgram,
    f: Forest,
    cfg: MpcConfig,
    ledger: SpaceLedger | None = None,
    *,
    phase: str = "rounds",
    max_rounds: int | None = None,
) -> tuple[list[Any], SpaceLedger]:
    """Execute a node program until every node halts with no mail in flight.

    Each round delivers the previous round's messages, runs ``step`` on every
    node that is awake or has mail, and collects outboxes in (sender, sequence)
    order. Returns final node states and the ledger.
    """
    if ledger is None:
        ledger = SpaceLedger(cfg.local_capacity)
    ceiling = cfg.round_ceiling if max_rounds is None else max_rounds
    assignment = MachineAssignment.pack([1 + len(a) for a in f.adj], cfg.local_capacity)
    ledger.observe_storage(assignment.loads, phase)
    states = [program.init(v, f) for v in f.nodes()]
    awake = [True] * f.n
    inboxes: list[list[tuple[int, Any]]] = [[] for _ in range(f.n)]
    rounds = 0
    while any(awake) or any(inboxes):
        rounds += 1
        if rounds > ceiling:
            raise NonTermination(f"{phase}: still running after {ceiling} rounds")
        outgoing: list[list[tuple[int, Any]]] = [[] for _ in range(f.n)]
        sent: dict[int, int] = {}
        received: dict[int, int] = {}
        for v in range(f.n):
            if not awake[v] and not inboxes[v]:
                continue
            states[v], outbox, halted = program.step(v, states[v], inboxes[v], rounds)
            awake[v] = not halted
            mv = assignment.first_machine[v]
            for dest, payload in outbox:
                words = payload_words(payload)
                sent[mv] = sent.get(mv, 0) + words
                md = assignment.first_machine[dest]
                received[md] = received.get(md, 0) + words
                outgoing[dest].append((v, payload))
        inboxes = outgoing
        ledger.charge(phase, 1)
        ledger.observe_traffic(sent, received, phase)
    return states, ledger


class MpcSim:
    """Execution context shared by all phases of one pipeline run.

    With ``account=False`` (direct mode) every communication step costs one
    logical round and no machine-level checks are made.
    """

    def __init__(self, cfg: MpcConfig, account: bool = True):
        self.cfg = cfg
        self.account = account
        self.ledger = SpaceLedger(cfg.local_capacity)

    @property
    def mode(self) -> str:
        return "mpc" if self.account else "direct"

    def charge(self, phase: str, rounds: int | None = None) -> None:
        if rounds is None:
            rounds = self.cfg.primitive_rounds if self.account else 1
        self.ledger.charge(phase, rounds)

    def store(self, words: Sequence[int], phase: str) -> MachineAssignment | None:
        """Pack per-node payloads and record storage; None in direct mode."""
        if not self.account:
            self.ledger.global_peak_words = max(self.ledger.global_peak_words, sum(words))
            return None
        assignment = MachineAssignment.pack(words, self.cfg.local_capacity)
        self.ledger.observe_storage(assignment.loads, phase)
        return assignment

    def neighbor_exchange(self, f: Forest, active: Iterable[int], phase: str,
                          assignment: MachineAssignment | None = None) -> None:
        """One round in which every active node sends one word per incident edge."""
        self.ledger.charge(phase, 1)
        if not self.account:
            return
        if assignment is None:
            assignment = MachineAssignment.pack([1 + len(a) for a in f.adj], self.cfg.local_capacity)
        sent: dict[int, int] = {}
        received: dict[int, int] = {}
        for v in active:
            d = len(f.adj[v])
            for m, words in assignment.spread(v, d):
                sent[m] = sent.get(m, 0) + words
                received[m] = received.get(m, 0) + words
        self.ledger.observe_traffic(sent, received, phase)

    def sort(self, items: Sequence[tuple[Hashable, Any]], phase: str, item_words: int = 2) -> SortResult | None:
        if not self.account:
            self.ledger.charge(phase, 1)
            return None
        return mpc_sort(items, self.cfg, self.ledger, item_words=item_words, phase=phase)

    def exchange(self, queries: Sequence[tuple[int, int, Any]], knowledge, **kw: Any) -> list[Any]:
        if not self.account:
            phase = kw.pop("phase", "query")
            kw.pop("asker_machine", None)
            kw.pop("target_machine", None)
            kw.pop("span", None)
            replies = query_exchange(queries, knowledge, self.cfg, None, **kw)
            self.ledger.charge(phase, 1)
            return replies
        return query_exchange(queries, knowledge, self.cfg, self.ledger, **kw)
