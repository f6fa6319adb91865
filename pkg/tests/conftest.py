from __future__ import annotations

from itertools import combinations

import numpy as np
import pytest

from camuvx.graph import CausalGraph

ACCEPTANCE_LINES: list[str] = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)


# -- independent reference implementations -----------------------------------------


def brute_d_separated(g: CausalGraph, a: int, b: int, z) -> bool:
    """Enumerate every simple path in the skeleton and apply the blocking rules."""
    z = set(z)
    nbrs = {v: set(g.parents[v]) | set(g.children[v]) for v in range(g.n_vertices)}

    desc = {v: set() for v in range(g.n_vertices)}
    for v in range(g.n_vertices):
        stack = [v]
        while stack:
            u = stack.pop()
            for c in g.children[u]:
                if c not in desc[v]:
                    desc[v].add(c)
                    stack.append(c)

    def active(path):
        for k in range(1, len(path) - 1):
            prev, mid, nxt = path[k - 1], path[k], path[k + 1]
            collider = (prev, mid) in g.edges and (nxt, mid) in g.edges
            if collider:
                if mid not in z and not (desc[mid] & z):
                    return False
            elif mid in z:
                return False
        return True

    def walk(path):
        v = path[-1]
        if v == b:
            return active(path)
        return any(walk(path + [w]) for w in sorted(nbrs[v]) if w not in path)

    return not walk([a])


def brute_paths(g: CausalGraph, src: int, dst: int) -> list[list[int]]:
    out = []

    def dfs(path):
        if path[-1] == dst:
            out.append(path)
            return
        for c in sorted(g.children[path[-1]]):
            if c not in path:
                dfs(path + [c])

    dfs([src])
    return out


def upper_triangular_dags(n: int):
    """Every DAG on ``n`` vertices up to relabelling (identity topological order)."""
    slots = list(combinations(range(n), 2))
    labels = [f"v{i}" for i in range(n)]
    for mask in range(1 << len(slots)):
        edges = [slots[k] for k in range(len(slots)) if mask >> k & 1]
        yield CausalGraph.from_edges(labels, edges)


def random_dag(rng: np.random.Generator, n: int, p_edge: float = 0.4, n_hidden: int = 0) -> CausalGraph:
    order = rng.permutation(n)
    edges = [(int(order[a]), int(order[b])) for a in range(n) for b in range(a + 1, n) if rng.random() < p_edge]
    hidden = [int(v) for v in rng.choice(n, size=n_hidden, replace=False)] if n_hidden else []
    return CausalGraph.from_edges([f"v{i}" for i in range(n)], edges, hidden=hidden)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)
