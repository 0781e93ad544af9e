from __future__ import annotations

import random
import sys
from pathlib import Path

import pytest
from hypothesis import strategies as st

sys.path.insert(0, str(Path(__file__).resolve().parent))

from forestmpc.forest import Forest, build_forest  # noqa: E402

ACCEPTANCE_LINES: list[str] = []


def random_tree_edges(n: int, rng: random.Random) -> list[tuple[int, int]]:
    return [(rng.randrange(i), i) for i in range(1, n)]


@st.composite
def forests(draw, min_nodes: int = 1, max_nodes: int = 30, drop: bool = True) -> Forest:
    """Random labelled forests: attach each node to an earlier one, shuffle
    the labels, then maybe cut some edges."""
    n = draw(st.integers(min_nodes, max_nodes))
    parents = [draw(st.integers(0, i - 1)) for i in range(1, n)]
    perm = draw(st.permutations(range(n)))
    edges = [(perm[p], perm[i]) for i, p in enumerate(parents, 1)]
    if drop and edges:
        keep = draw(st.lists(st.booleans(), min_size=len(edges), max_size=len(edges)))
        edges = [e for e, k in zip(edges, keep) if k or len(edges) < 3]
    return build_forest(edges, n)


@st.composite
def trees(draw, min_nodes: int = 1, max_nodes: int = 30) -> Forest:
    return draw(forests(min_nodes, max_nodes, drop=False))


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)


@pytest.fixture
def rng() -> random.Random:
    return random.Random(20240607)
