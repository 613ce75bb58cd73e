from __future__ import annotations

import random

import pytest

from gcforge.graph import Graph, is_connected


def path_graph(n: int) -> Graph:
    return Graph(n, [(i, i + 1) for i in range(n - 1)])


def cycle_graph(n: int) -> Graph:
    return Graph(n, [(i, (i + 1) % n) for i in range(n)])


def star_graph(n: int) -> Graph:
    """Center 0 with n-1 leaves."""
    return Graph(n, [(0, i) for i in range(1, n)])


def complete_graph(n: int) -> Graph:
    return Graph(n, [(i, j) for i in range(n) for j in range(i + 1, n)])


def er_graph(n: int, p: float, seed: int) -> Graph:
    r = random.Random(seed)
    return Graph(n, [(u, v) for u in range(n) for v in range(u + 1, n) if r.random() < p])


def connected_er_graphs(count: int, n: int, p: float, base_seed: int) -> list[Graph]:
    """First ``count`` connected draws from a deterministic seed sequence."""
    out: list[Graph] = []
    seed = base_seed
    while len(out) < count:
        g = er_graph(n, p, seed)
        seed += 1
        if is_connected(g):
            out.append(g)
    return out


@pytest.fixture
def path3() -> Graph:
    return path_graph(3)


@pytest.fixture
def k3() -> Graph:
    return complete_graph(3)
