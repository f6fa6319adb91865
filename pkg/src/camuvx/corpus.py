"""Small random graphs for exhaustive population-level checks."""
from __future__ import annotations

import numpy as np

from .graph import CausalGraph


def random_small_graph(seed: int, n_observed=(4, 5), n_hidden=(0, 2), edge_prob: float = 0.4) -> CausalGraph:
    """Random DAG with a few observed vertices and hidden confounders or mediators.

    Parameters
    ----------
    seed : int
    n_observed, n_hidden : tuple of int
        Inclusive ranges the counts are drawn from.
    edge_prob : float
        Probability of each observed-observed edge along a random order.
    """
    rng = np.random.default_rng(seed)
    p = int(rng.integers(n_observed[0], n_observed[1] + 1))
    h = int(rng.integers(n_hidden[0], n_hidden[1] + 1))
    order = [int(v) for v in rng.permutation(p)]
    rank = {v: r for r, v in enumerate(order)}
    edges = {(order[a], order[b]) for a in range(p) for b in range(a + 1, p) if rng.random() < edge_prob}
    for k in range(h):
        u = p + k
        if rng.random() < 0.5:
            width = 3 if p >= 3 and rng.random() < 0.25 else 2
            for c in rng.choice(p, size=width, replace=False):
                edges.add((u, int(c)))
        else:
            a, b = (int(v) for v in rng.choice(p, size=2, replace=False))
            if rank[a] > rank[b]:
                a, b = b, a
            if rng.random() < 0.5:
                edges.discard((a, b))
            edges |= {(a, u), (u, b)}
    labels = [f"x{i + 1}" for i in range(p)] + [f"U{k + 1}" for k in range(h)]
    return CausalGraph.from_edges(labels, sorted(edges), hidden=range(p, p + h))


def corpus(n_graphs: int, start: int = 0) -> list[CausalGraph]:
    return [random_small_graph(s) for s in range(start, start + n_graphs)]
