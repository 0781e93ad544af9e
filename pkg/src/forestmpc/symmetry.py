"""Three-coloring, maximal independent set and maximal matching on top of a
strict H-decomposition.

Pivots are colored first by id-based color reduction on their degree-2
subgraph. Every other node then has at most one outgoing edge, so it learns
its whole directed path by pointer doubling and replays a greedy coloring
from the far end.
"""
from __future__ import annotations

import json
import math
from dataclasses import dataclass
from typing import Any, Sequence

from .forest import Forest
from .hdecomp import INF, FormatError, Verdict, pivot_nodes
from .mpcsim import TUPLE_WORDS, MpcConfig, MpcSim, SpaceLedger, ceil_log2, run_rounds

PALETTE = (1, 2, 3)


class SymmetryError(ValueError):
    pass


class DegreeViolation(SymmetryError):
    pass


class StrictnessViolation(SymmetryError):
    pass


class PathTooLong(SymmetryError):
    pass


class ImproperColoring(SymmetryError):
    pass


# -- color reduction on the pivot subgraph --------------------------------------------

def _is_prime(q: int) -> bool:
    return q >= 2 and all(q % p for p in range(2, math.isqrt(q) + 1))


def _next_prime(q: int) -> int:
    while not _is_prime(q):
        q += 1
    return q


def _integer_root_ceil(m: int, r: int) -> int:
    """Smallest ``b`` with ``b ** r >= m``."""
    b = max(1, int(round(m ** (1 / r))))
    while b ** r < m:
        b += 1
    while b > 1 and (b - 1) ** r >= m:
        b -= 1
    return b


def reduction_schedule(palette: int) -> list[tuple[int, int]]:
    """Steps ``(d, q)`` that shrink a proper coloring of a graph of maximum
    degree 2 from ``palette`` colors; each step maps to ``(2d+1)·q`` colors.

    A color is read as a polynomial of degree ``d`` over GF(q). Two distinct
    polynomials agree on at most ``d`` points, so among ``2d+1`` evaluation
    points one separates a node from both of its neighbors.
    """
    steps = []
    m = palette
    while True:
        best: tuple[int, int, int] | None = None
        d = 1
        while best is None or 2 * d + 1 < best[0]:
            q = _next_prime(max(2 * d + 1, _integer_root_ceil(m, d + 1)))
            size = (2 * d + 1) * q
            if best is None or size < best[0]:
                best = (size, d, q)
            d += 1
        size, d, q = best
        if size >= m:
            return steps
        steps.append((d, q))
        m = size


def final_palette(palette: int) -> int:
    m = palette
    for d, q in reduction_schedule(palette):
        m = (2 * d + 1) * q
    return m


def _evaluate(color: int, d: int, q: int, x: int) -> int:
    value, power = 0, 1
    for _ in range(d + 1):
        value = (value + (color % q) * power) % q
        color //= q
        power = power * x % q
    return value


def reduce_color(color: int, neighbor_colors: Sequence[int], d: int, q: int) -> int:
    for x in range(2 * d + 1):
        mine = _evaluate(color, d, q, x)
        if all(_evaluate(c, d, q, x) != mine for c in neighbor_colors):
            return x * q + mine
    raise ImproperColoring(f"color {color} not separable from {list(neighbor_colors)}")


class _PivotColoring:
    """Node program: announce the color, then apply one schedule step per round."""

    def __init__(self, pivots: set[int], schedule: list[tuple[str, int, int]]):
        self.pivots = pivots
        self.schedule = schedule

    def init(self, v: int, forest: Forest) -> Any:
        if v not in self.pivots:
            return None
        nbrs = [w for w in forest.adj[v] if w in self.pivots]
        return {"color": v, "nbrs": nbrs}

    def step(self, v: int, state: Any, inbox: list[tuple[int, Any]], round: int):
        if state is None:
            return state, [], True
        if not state["nbrs"]:
            state["color"] = 1
            return state, [], True
        if round >= 2:
            kind, a, b = self.schedule[round - 2]
            seen = [c for _, c in inbox]
            if kind == "reduce":
                state["color"] = reduce_color(state["color"], seen, a, b)
            elif kind == "shift":
                state["color"] += 1
            elif state["color"] == a:
                state["color"] = min(c for c in PALETTE if c not in seen)
        if round - 1 >= len(self.schedule):
            return state, [], True
        return state, [(w, state["color"]) for w in state["nbrs"]], False


@dataclass
class PivotColoring:
    color: dict[int, int]
    rounds: int
    palette_steps: int


def pivot_round_bound(n: int) -> int:
    """Announcement round, one round per reduction step, then one per
    eliminated color."""
    return 1 + len(reduction_schedule(max(n, 1))) + 1 + max(0, final_palette(max(n, 1)) - 3)


def _run_program(program: Any, f: Forest, cfg: MpcConfig, sim: MpcSim, phase: str) -> list[Any]:
    if sim.account:
        states, _ = run_rounds(program, f, cfg, sim.ledger, phase=phase)
        return states
    scratch = SpaceLedger(cfg.local_capacity)
    states, _ = run_rounds(program, f, cfg, scratch, phase=phase)
    sim.charge(phase, scratch.rounds)
    return states


def color_pivots(f: Forest, layer: Sequence[float], cfg: MpcConfig | None = None,
                 sim: MpcSim | None = None) -> PivotColoring:
    """Proper coloring of ``F[V^pivot]`` with colors in {1, 2, 3}."""
    cfg = cfg or MpcConfig(n=max(f.n, 1))
    sim = sim or MpcSim(cfg, account=False)
    piv = pivot_nodes(f, layer)
    for v in sorted(piv):
        inner = sum(1 for w in f.adj[v] if w in piv)
        if inner > 2:
            raise DegreeViolation(f"pivot {v} has {inner} pivot neighbors")
    palette = max(f.n, 1)
    steps: list[tuple[str, int, int]] = [("reduce", d, q) for d, q in reduction_schedule(palette)]
    steps.append(("shift", 0, 0))  # colors 0..m-1 become 1..m
    top = final_palette(palette)
    steps += [("eliminate", c, 0) for c in range(top, 3, -1)]
    ledger_before = sim.ledger.rounds
    states = _run_program(_PivotColoring(piv, steps), f, cfg, sim, "color.pivots")
    color = {v: states[v]["color"] for v in sorted(piv)}
    return PivotColoring(color, sim.ledger.rounds - ledger_before, len(steps))


# -- orientation -------------------------------------------------------------------------

@dataclass
class Orientation:
    """Outgoing neighbor (or None) and forbidden colors for every non-pivot.

    The out-neighbor may be a pivot of a higher layer; its color then reaches
    the node along the path, not through the forbidden set.
    """

    out: dict[int, int | None]
    forbidden: dict[int, frozenset[int]]


def orient_and_forbid(f: Forest, layer: Sequence[float], pc: dict[int, int]) -> Orientation:
    piv = pivot_nodes(f, layer)
    out: dict[int, int | None] = {}
    forbidden: dict[int, frozenset[int]] = {}
    for v in range(f.n):
        own = layer[v]
        if v in piv or own == INF:
            continue
        qualifying = [w for w in f.adj[v] if layer[w] > own or (layer[w] == own and w not in piv)]
        if len(qualifying) > 1:
            raise StrictnessViolation(f"node {v} has {len(qualifying)} higher or same-layer non-pivot neighbors")
        target = None
        if qualifying:
            w = qualifying[0]
            if layer[w] > own or w > v:
                target = w
        colors = frozenset(pc[w] for w in f.adj[v] if w in piv and layer[w] >= own and w != target)
        if len(colors) > 2 or (target is not None and len(colors) > 1):
            raise StrictnessViolation(f"node {v} has forbidden colors {sorted(colors)} and out-edge {target}")
        out[v] = target
        forbidden[v] = colors
    return Orientation(out, forbidden)


# -- directed paths ----------------------------------------------------------------------

@dataclass
class PathColoring:
    color: list[int]
    doubling_rounds: int
    max_path_nodes: int


def _smallest_free(excluded: set[int] | frozenset[int]) -> int:
    for c in PALETTE:
        if c not in excluded:
            return c
    raise StrictnessViolation(f"no free color, all of {sorted(excluded)} are excluded")


def directed_path_color(f: Forest, layer: Sequence[float], orientation: Orientation,
                        pc: dict[int, int], cfg: MpcConfig | None = None,
                        sim: MpcSim | None = None) -> PathColoring:
    """Color every non-pivot consistently with ``pc``.

    Each node doubles its pointer along outgoing edges until it holds its
    whole path, then colors the path greedily from the far end; nodes
    sharing a suffix compute identical colors for it.
    """
    cfg = cfg or MpcConfig(n=max(f.n, 1))
    sim = sim or MpcSim(cfg, account=False)
    max_layer = max((int(a) for a in layer if a != INF), default=0)
    limit = max_layer + 1
    # a path element is (node, forbidden colors, pivot color or 0)
    seq: dict[int, list[tuple[int, frozenset[int], int]]] = {}
    ptr: dict[int, int | None] = {}
    for v, c in pc.items():
        seq[v] = [(v, frozenset(), c)]
        ptr[v] = None
    for v, w in orientation.out.items():
        seq[v] = [(v, orientation.forbidden[v], 0)]
        ptr[v] = w
    rounds = 0
    while True:
        pending = sorted(v for v, w in ptr.items() if w is not None)
        if not pending:
            break
        rounds += 1
        if rounds > ceil_log2(limit) + 1:
            raise PathTooLong(f"pointer doubling exceeds {ceil_log2(limit) + 1} rounds")
        queries = [(ptr[v], v, None) for v in pending]
        snapshot_seq = {v: list(s) for v, s in seq.items()}
        snapshot_ptr = dict(ptr)
        placed = sim.store([TUPLE_WORDS * len(seq.get(v, ())) + 1 for v in range(f.n)], "color.doubling")
        machine = (lambda v: placed.first_machine[v]) if placed is not None else (lambda v: v)
        width = (lambda v: placed.span[v]) if placed is not None else (lambda v: 1)
        sim.exchange(
            queries, lambda w: snapshot_seq[w], answer=lambda w, _: snapshot_seq[w],
            reply_words=lambda r: TUPLE_WORDS * len(r), answer_limit=limit,
            asker_machine=machine, target_machine=machine, span=width, phase="color.doubling",
        )
        for v in pending:
            w = snapshot_ptr[v]
            seq[v] = snapshot_seq[v] + snapshot_seq[w]
            ptr[v] = snapshot_ptr[w]
            if len(seq[v]) > limit:
                raise PathTooLong(f"directed path from {v} has more than {limit} nodes")
    color = [0] * f.n
    for v, c in pc.items():
        color[v] = c
    longest = 0
    for v in orientation.out:
        path = seq[v]
        longest = max(longest, len(path))
        node, forb, fixed = path[-1]
        current = fixed if fixed else _smallest_free(forb)
        for node, forb, _ in reversed(path[:-1]):
            current = _smallest_free(set(forb) | {current})
        color[v] = current
    return PathColoring(color, rounds, longest)


def doubling_round_bound(max_path_nodes: int) -> int:
    return ceil_log2(max(max_path_nodes, 1)) + 1


@dataclass
class ThreeColoring:
    color: list[int]
    pivots: PivotColoring
    orientation: Orientation
    paths: PathColoring


def three_color(f: Forest, layer: Sequence[float], cfg: MpcConfig | None = None,
                sim: MpcSim | None = None) -> ThreeColoring:
    cfg = cfg or MpcConfig(n=max(f.n, 1))
    sim = sim or MpcSim(cfg, account=False)
    pc = color_pivots(f, layer, cfg, sim)
    orientation = orient_and_forbid(f, layer, pc.color)
    sim.neighbor_exchange(f, range(f.n), "color.orient")
    paths = directed_path_color(f, layer, orientation, pc.color, cfg, sim)
    return ThreeColoring(paths.color, pc, orientation, paths)


# -- MIS and matching --------------------------------------------------------------------

def check_proper(f: Forest, color: Sequence[int]) -> None:
    if len(color) != f.n:
        raise ImproperColoring(f"coloring has {len(color)} entries, forest has {f.n} nodes")
    for u, v in f.edges():
        if color[u] == color[v]:
            raise ImproperColoring(f"edge ({u}, {v}) has both ends colored {color[u]}")


def mis_from_coloring(f: Forest, color: Sequence[int], sim: MpcSim | None = None) -> set[int]:
    """One sweep per color class: join unless a neighbor already joined."""
    check_proper(f, color)
    chosen: set[int] = set()
    excluded: set[int] = set()
    for c in sorted(set(color)):
        joining = [v for v in range(f.n) if color[v] == c and v not in excluded]
        chosen.update(joining)
        for v in joining:
            excluded.update(f.adj[v])
        if sim is not None:
            sim.neighbor_exchange(f, joining, "mis.sweep")
    return chosen


def matching_orientation(f: Forest, layer: Sequence[float]) -> dict[int, list[int]]:
    """Edges point to a strictly higher layer, or to the larger id within a layer."""
    out: dict[int, list[int]] = {}
    for v in range(f.n):
        targets = [w for w in f.adj[v] if layer[w] > layer[v] or (layer[w] == layer[v] and w > v)]
        if len(targets) > 2:
            raise StrictnessViolation(f"node {v} has {len(targets)} outgoing matching edges")
        out[v] = sorted(targets, reverse=True)
    return out


def matching_from_coloring(f: Forest, layer: Sequence[float], color: Sequence[int],
                           sim: MpcSim | None = None) -> set[tuple[int, int]]:
    """Per color class, unmatched nodes propose to their highest-id unmatched
    out-neighbor; every target accepts its highest-id proposer; rejected
    proposers try their other out-neighbor once."""
    check_proper(f, color)
    out = matching_orientation(f, layer)
    mate: dict[int, int] = {}
    for c in sorted(set(color)):
        proposers = [v for v in range(f.n) if color[v] == c and v not in mate]
        for attempt in range(2):
            offers: dict[int, int] = {}
            for v in proposers:
                if v in mate:
                    continue
                options = [w for w in out[v] if w not in mate]
                if options:
                    w = options[0]
                    offers[w] = max(offers.get(w, -1), v)
            for w, v in offers.items():
                mate[w] = v
                mate[v] = w
            if sim is not None:
                sim.neighbor_exchange(f, proposers, "matching.propose")
                sim.neighbor_exchange(f, list(offers), "matching.accept")
    return {(min(u, v), max(u, v)) for u, v in mate.items()}


# -- export ------------------------------------------------------------------------------

def coloring_to_text(color: Sequence[int]) -> str:
    return "".join(f"{v} {c}\n" for v, c in enumerate(color))


def coloring_to_json(color: Sequence[int]) -> str:
    return json.dumps({"n": len(color), "color": list(color)})


def nodes_to_text(nodes: set[int]) -> str:
    return "".join(f"{v}\n" for v in sorted(nodes))


def edges_to_text(edges: set[tuple[int, int]]) -> str:
    return "".join(f"{u} {v}\n" for u, v in sorted(edges))


def _data_lines(text: str) -> list[tuple[int, list[str]]]:
    out = []
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.strip()
        if line and not line.startswith("#"):
            out.append((lineno, line.split()))
    return out


def _int(token: str, lineno: int) -> int:
    if not token.isdigit():
        raise FormatError(f"line {lineno}: expected a non-negative integer, got {token!r}")
    return int(token)


def parse_coloring(text: str, n: int) -> list[int]:
    if text.lstrip().startswith("{"):
        try:
            color = [int(c) for c in json.loads(text)["color"]]
        except (ValueError, KeyError, TypeError) as exc:
            raise FormatError(f"not a coloring document: {exc}") from None
        if len(color) != n:
            raise FormatError(f"coloring covers {len(color)} nodes, forest has {n}")
        return color
    color: list[int | None] = [None] * n
    for lineno, parts in _data_lines(text):
        if len(parts) != 2:
            raise FormatError(f"line {lineno}: expected 'node color'")
        v, c = _int(parts[0], lineno), _int(parts[1], lineno)
        if v >= n or color[v] is not None:
            raise FormatError(f"line {lineno}: node {v} out of range or repeated")
        color[v] = c
    if any(c is None for c in color):
        raise FormatError(f"no color given for node {color.index(None)}")
    return color  # type: ignore[return-value]


def parse_nodes(text: str, n: int) -> set[int]:
    out = set()
    for lineno, parts in _data_lines(text):
        if len(parts) != 1:
            raise FormatError(f"line {lineno}: expected one node id")
        v = _int(parts[0], lineno)
        if v >= n:
            raise FormatError(f"line {lineno}: node {v} outside 0..{n - 1}")
        out.add(v)
    return out


def parse_edges(text: str, n: int) -> set[tuple[int, int]]:
    out = set()
    for lineno, parts in _data_lines(text):
        if len(parts) != 2:
            raise FormatError(f"line {lineno}: expected 'u v'")
        u, v = _int(parts[0], lineno), _int(parts[1], lineno)
        if u >= n or v >= n:
            raise FormatError(f"line {lineno}: edge ({u}, {v}) out of range")
        out.add((min(u, v), max(u, v)))
    return out


# -- validators --------------------------------------------------------------------------

def validate_coloring(f: Forest, color: Sequence[int], palette: Sequence[int] = PALETTE) -> Verdict:
    if len(color) != f.n:
        return Verdict("coloring", False, None, f"{len(color)} colors for {f.n} nodes")
    allowed = set(palette)
    for v, c in enumerate(color):
        if c not in allowed:
            return Verdict("coloring", False, v, f"color {c} outside {sorted(allowed)}")
    for u, v in f.edges():
        if color[u] == color[v]:
            return Verdict("coloring", False, u, f"edge ({u}, {v}) is monochromatic")
    return Verdict("coloring", True)


def validate_mis(f: Forest, chosen: set[int]) -> Verdict:
    for u, v in f.edges():
        if u in chosen and v in chosen:
            return Verdict("mis", False, u, f"edge ({u}, {v}) inside the set")
    for v in range(f.n):
        if v not in chosen and not any(w in chosen for w in f.adj[v]):
            return Verdict("mis", False, v, "neither chosen nor next to a chosen node")
    return Verdict("mis", True)


def validate_matching(f: Forest, matching: set[tuple[int, int]]) -> Verdict:
    covered: set[int] = set()
    for u, v in sorted(matching):
        if v not in f.adj[u]:
            return Verdict("matching", False, u, f"({u}, {v}) is not an edge")
        if u in covered or v in covered:
            return Verdict("matching", False, u if u in covered else v, "node matched twice")
        covered.update((u, v))
    for u, v in f.edges():
        if u not in covered and v not in covered:
            return Verdict("matching", False, u, f"edge ({u}, {v}) could still be added")
    return Verdict("matching", True)
