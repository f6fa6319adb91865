"""Random graphs and data from the additive structural model.

Every vertex is generated as ``sum over parents of (x_p + a)^c + b`` plus
Gaussian noise, then standardised on the spot so deep graphs stay bounded. ``sigma`` is the
absolute standard deviation of the Gaussian noise.
"""
from __future__ import annotations

import csv
import hashlib
import io
import json
from dataclasses import dataclass, field
from itertools import combinations
from pathlib import Path
from typing import Any

import numpy as np

from .graph import CausalGraph, GraphError

MAX_RETRIES = 10


class GenerationError(RuntimeError):
    pass


# -- graphs -----------------------------------------------------------------------


def _with_observed_first(n_nodes: int, edges, observed: list[int]) -> CausalGraph:
    observed = sorted(observed)
    hidden = [v for v in range(n_nodes) if v not in set(observed)]
    new_id = {v: i for i, v in enumerate(observed + hidden)}
    labels = [f"x{i + 1}" for i in range(len(observed))] + [f"U{i + 1}" for i in range(len(hidden))]
    return CausalGraph.from_edges(
        labels,
        [(new_id[a], new_id[b]) for a, b in edges],
        hidden=range(len(observed), n_nodes),
    )


def ba_edges(n_nodes: int, m: int, rng: np.random.Generator) -> list[tuple[int, int]]:
    """Preferential attachment with ``m`` links per new vertex, oriented new -> old.

    Starts from a star on ``m + 1`` vertices (hub ``0``), so the result has
    ``m * (n_nodes - m)`` edges. Every edge points from the later vertex to
    the earlier one, so each vertex added by attachment has exactly ``m``
    children.
    """
    if m < 1 or m >= n_nodes:
        raise GraphError("need 1 <= children_per_node < n_nodes")
    edges = [(v, 0) for v in range(1, m + 1)]
    repeated = [0] * m + list(range(1, m + 1))
    for source in range(m + 1, n_nodes):
        targets: set[int] = set()
        while len(targets) < m:
            targets.add(repeated[int(rng.integers(len(repeated)))])
        for t in sorted(targets):
            edges.append((source, t))
        repeated.extend(sorted(targets))
        repeated.extend([source] * m)
    return edges


def sample_ba_graph(n_nodes: int, children_per_node: int, n_observed: int, seed: int) -> CausalGraph:
    """Barabasi-Albert DAG with a random observed subset.

    Parameters
    ----------
    n_nodes : int
        Total vertex count.
    children_per_node : int
        Attachment links added with each new vertex.
    n_observed : int
        Vertices flagged observed, chosen uniformly; the rest are hidden.
    seed : int
    """
    if not 2 <= n_observed <= n_nodes:
        raise GraphError("need 2 <= n_observed <= n_nodes")
    rng = np.random.default_rng(seed)
    edges = ba_edges(n_nodes, children_per_node, rng)
    observed = sorted(int(v) for v in rng.choice(n_nodes, size=n_observed, replace=False))
    return _with_observed_first(n_nodes, edges, observed)


def sample_er_graph_with_hidden(
    n_observed: int,
    edge_prob: float,
    n_confounder_pairs: int,
    n_mediator_pairs: int,
    seed: int,
) -> CausalGraph:
    """Erdos-Renyi DAG on the observed vertices plus injected hidden vertices.

    Each confounder pair gains a fresh hidden common parent. Each mediator
    pair ``(u, v)``, oriented by the random causal order, gains a fresh hidden
    ``u -> H -> v``; a direct ``u -> v`` edge, if present, is replaced.
    """
    if not 0.0 <= edge_prob <= 1.0:
        raise GraphError("edge_prob must lie in [0, 1]")
    if n_observed < 2:
        raise GraphError("need at least two observed vertices")
    pairs = list(combinations(range(n_observed), 2))
    for name, count in (("confounder", n_confounder_pairs), ("mediator", n_mediator_pairs)):
        if not 0 <= count <= len(pairs):
            raise GraphError(f"{name} pair count {count} exceeds the {len(pairs)} available observed pairs")
    rng = np.random.default_rng(seed)
    order = [int(v) for v in rng.permutation(n_observed)]
    rank = {v: r for r, v in enumerate(order)}
    edges = set()
    for a in range(n_observed):
        for b in range(a + 1, n_observed):
            if rng.random() < edge_prob:
                edges.add((order[a], order[b]))
    nxt = n_observed
    for idx in sorted(rng.choice(len(pairs), size=n_confounder_pairs, replace=False)):
        u, v = pairs[idx]
        edges |= {(nxt, u), (nxt, v)}
        nxt += 1
    for idx in sorted(rng.choice(len(pairs), size=n_mediator_pairs, replace=False)):
        u, v = pairs[idx]
        if rank[u] > rank[v]:
            u, v = v, u
        edges.discard((u, v))
        edges |= {(u, nxt), (nxt, v)}
        nxt += 1
    return _with_observed_first(nxt, sorted(edges), list(range(n_observed)))


# -- structural model -------------------------------------------------------------


@dataclass(frozen=True)
class ScmSpec:
    """Graph plus per-edge ``(a, b, c)`` and per-vertex noise scales."""

    graph: CausalGraph
    edge_params: dict[tuple[int, int], tuple[float, float, int]]
    sigma: tuple[float, ...]
    seed: int

    def __post_init__(self):
        if set(self.edge_params) != set(self.graph.edges):
            raise GenerationError("edge parameters must cover exactly the graph's edges")
        if any(c < 2 for _, _, c in self.edge_params.values()):
            raise GenerationError("exponent c must be at least 2")
        if len(self.sigma) != self.graph.n_vertices or min(self.sigma, default=1.0) <= 0:
            raise GenerationError("one positive noise scale per vertex is required")

    def to_dict(self) -> dict[str, Any]:
        return {
            "seed": self.seed,
            "graph": self.graph.to_dict(),
            "edges": [[p, c, *self.edge_params[(p, c)]] for p, c in sorted(self.edge_params)],
            "sigma": list(self.sigma),
        }

    @classmethod
    def from_dict(cls, d: dict[str, Any]) -> "ScmSpec":
        g = CausalGraph.from_dict(d["graph"])
        params = {(int(p), int(c)): (float(a), float(b), int(e)) for p, c, a, b, e in d["edges"]}
        return cls(g, params, tuple(float(s) for s in d["sigma"]), int(d["seed"]))

    def digest(self) -> str:
        return hashlib.sha256(json.dumps(self.to_dict(), sort_keys=True).encode()).hexdigest()[:16]


def make_scm_spec(graph: CausalGraph, seed: int) -> ScmSpec:
    """Draw ``a, b ~ U[-1, 1]``, ``c`` from ``{2, 3}`` and ``sigma ~ U[0.5, 1]``."""
    rng = np.random.default_rng(seed)
    params = {}
    for e in sorted(graph.edges):
        a, b = rng.uniform(-1.0, 1.0, size=2)
        params[e] = (float(a), float(b), int(rng.integers(2, 4)))
    sigma = tuple(float(s) for s in rng.uniform(0.5, 1.0, size=graph.n_vertices))
    return ScmSpec(graph, params, sigma, int(seed))


@dataclass(frozen=True)
class Dataset:
    values: np.ndarray
    labels: tuple[str, ...]
    provenance: dict[str, Any] = field(default_factory=dict)

    def __post_init__(self):
        v = self.values
        if v.ndim != 2 or v.shape[0] < 1 or v.shape[1] < 2:
            raise ValueError("dataset needs n >= 1 rows and p >= 2 columns")
        if v.shape[1] != len(self.labels):
            raise ValueError("one label per column is required")
        if not np.all(np.isfinite(v)):
            raise ValueError("dataset contains missing or non-finite values")

    @property
    def n(self) -> int:
        return self.values.shape[0]

    @property
    def p(self) -> int:
        return self.values.shape[1]

    def to_csv(self, path: str | Path) -> None:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(self.labels)
        for row in self.values:
            w.writerow([repr(float(x)) for x in row])
        Path(path).write_text(buf.getvalue(), encoding="utf-8")

    def save(self, path: str | Path) -> None:
        """Write ``path`` (CSV) and ``path`` + ``.json`` (provenance)."""
        path = Path(path)
        self.to_csv(path)
        sidecar = path.with_name(path.name + ".json")
        sidecar.write_text(json.dumps(self.provenance, indent=1, sort_keys=True) + "\n", encoding="utf-8")

    @classmethod
    def load(cls, path: str | Path) -> "Dataset":
        path = Path(path)
        labels, values = read_csv(path)
        sidecar = path.with_name(path.name + ".json")
        prov = json.loads(sidecar.read_text(encoding="utf-8")) if sidecar.exists() else {}
        return cls(values, labels, prov)


def read_csv(path: str | Path) -> tuple[tuple[str, ...], np.ndarray]:
    """Parse a header + numeric-rows CSV, reporting the offending line and column."""
    with open(path, newline="", encoding="utf-8") as fh:
        rows = list(csv.reader(fh))
    if not rows:
        raise ValueError(f"{path}: empty file")
    header = tuple(h.strip() for h in rows[0])
    data = []
    for ln, row in enumerate(rows[1:], start=2):
        if not row:
            continue
        if len(row) != len(header):
            raise ValueError(f"{path}:{ln}: expected {len(header)} fields, found {len(row)}")
        vals = []
        for col, cell in enumerate(row, start=1):
            try:
                vals.append(float(cell))
            except ValueError:
                raise ValueError(f"{path}:{ln}:{col}: cannot parse {cell!r} as a number") from None
        data.append(vals)
    if not data:
        raise ValueError(f"{path}: no data rows")
    return header, np.asarray(data, dtype=np.float64)


def _standardise(col: np.ndarray) -> np.ndarray:
    col = col - col.mean()
    sd = col.std()
    return col / sd if sd > 0 else col


def _simulate(spec: ScmSpec, n: int, rng: np.random.Generator) -> np.ndarray:
    g = spec.graph
    out = np.zeros((n, g.n_vertices))
    noise = rng.standard_normal((n, g.n_vertices))
    with np.errstate(all="ignore"):
        for v in g.topological_order:
            signal = np.zeros(n)
            for p in sorted(g.parents[v]):
                a, b, c = spec.edge_params[(p, v)]
                signal = signal + (out[:, p] + a) ** c + b
            out[:, v] = _standardise(signal + spec.sigma[v] * noise[:, v])
    return out


def sample_dataset(spec: ScmSpec, n_samples: int, seed: int | None = None) -> Dataset:
    """Ancestral sampling of the observed columns of ``spec``.

    Non-finite draws trigger a fresh set of coefficients (derived
    deterministically from the seed), up to ``MAX_RETRIES`` times.
    """
    if n_samples < 1:
        raise ValueError("n_samples must be positive")
    seed = spec.seed if seed is None else int(seed)
    current = spec
    for attempt in range(MAX_RETRIES + 1):
        rng = np.random.default_rng([seed, n_samples, attempt])
        full = _simulate(current, n_samples, rng)
        if np.all(np.isfinite(full)):
            g = current.graph
            cols = full[:, list(g.observed)]
            prov = {
                "seed": seed,
                "n_samples": n_samples,
                "attempt": attempt,
                "spec_digest": current.digest(),
                "observed_ids": list(g.observed),
                "spec": current.to_dict(),
            }
            return Dataset(cols, tuple(g.label(v) for v in g.observed), prov)
        current = make_scm_spec(spec.graph, int(np.random.SeedSequence([spec.seed, attempt + 1]).generate_state(1)[0]))
    raise GenerationError(f"non-finite samples after {MAX_RETRIES} coefficient redraws")


__all__ = [
    "Dataset",
    "GenerationError",
    "ScmSpec",
    "ba_edges",
    "make_scm_spec",
    "read_csv",
    "sample_ba_graph",
    "sample_dataset",
    "sample_er_graph_with_hidden",
]
