"""Causal DAGs over observed and hidden vertices.

Vertex ids are dense integers ``0..|V|-1``. Observed vertices map to data
columns in increasing id order, so ``g.column_of(v)`` is the index of ``v``
among ``g.observed``.
"""
from __future__ import annotations

import json
from dataclasses import dataclass, field
from enum import Enum
from functools import cached_property
from itertools import combinations
from pathlib import Path
from typing import Iterable, Sequence


class GraphError(ValueError):
    """Raised for malformed graphs or queries on unknown vertices."""


@dataclass(frozen=True)
class Vertex:
    id: int
    label: str
    observed: bool


@dataclass(frozen=True)
class CausalGraph:
    """Immutable DAG with an observed/hidden partition of its vertices."""

    vertices: tuple[Vertex, ...]
    edges: frozenset[tuple[int, int]] = field(default_factory=frozenset)

    def __post_init__(self):
        ids = [v.id for v in self.vertices]
        if ids != list(range(len(ids))):
            raise GraphError("vertex ids must be dense and sorted: 0..|V|-1")
        for a, b in self.edges:
            if a == b:
                raise GraphError(f"self-loop on vertex {a}")
            if not (0 <= a < len(ids) and 0 <= b < len(ids)):
                raise GraphError(f"edge ({a}, {b}) references an unknown vertex")
        if len(self.topological_order) != len(ids):
            raise GraphError("edge relation contains a cycle")

    @classmethod
    def from_edges(
        cls,
        labels: Sequence[str],
        edges: Iterable[tuple[int, int]],
        hidden: Iterable[int] = (),
    ) -> "CausalGraph":
        hidden = set(hidden)
        vertices = tuple(Vertex(i, lab, i not in hidden) for i, lab in enumerate(labels))
        return cls(vertices, frozenset((int(a), int(b)) for a, b in edges))

    @classmethod
    def from_labeled_edges(
        cls, observed: Sequence[str], hidden: Sequence[str], edges: Iterable[tuple[str, str]]
    ) -> "CausalGraph":
        """Build a graph from label pairs; observed vertices get the low ids."""
        labels = list(observed) + list(hidden)
        index = {lab: i for i, lab in enumerate(labels)}
        if len(index) != len(labels):
            raise GraphError("duplicate vertex label")
        try:
            e = [(index[a], index[b]) for a, b in edges]
        except KeyError as exc:
            raise GraphError(f"unknown vertex label {exc.args[0]!r}") from None
        return cls.from_edges(labels, e, hidden=range(len(observed), len(labels)))

    # -- structure -----------------------------------------------------------

    @property
    def n_vertices(self) -> int:
        return len(self.vertices)

    @cached_property
    def parents(self) -> tuple[frozenset[int], ...]:
        pa = [set() for _ in self.vertices]
        for a, b in self.edges:
            pa[b].add(a)
        return tuple(frozenset(s) for s in pa)

    @cached_property
    def children(self) -> tuple[frozenset[int], ...]:
        ch = [set() for _ in self.vertices]
        for a, b in self.edges:
            ch[a].add(b)
        return tuple(frozenset(s) for s in ch)

    @cached_property
    def topological_order(self) -> tuple[int, ...]:
        indeg = [0] * len(self.vertices)
        succ = [[] for _ in self.vertices]
        for a, b in self.edges:
            indeg[b] += 1
            succ[a].append(b)
        ready = sorted(i for i, d in enumerate(indeg) if d == 0)
        order = []
        while ready:
            v = ready.pop(0)
            order.append(v)
            for c in sorted(succ[v]):
                indeg[c] -= 1
                if indeg[c] == 0:
                    ready.append(c)
            ready.sort()
        return tuple(order)

    @cached_property
    def observed(self) -> tuple[int, ...]:
        return tuple(v.id for v in self.vertices if v.observed)

    @cached_property
    def hidden(self) -> tuple[int, ...]:
        return tuple(v.id for v in self.vertices if not v.observed)

    @cached_property
    def _column(self) -> dict[int, int]:
        return {v: i for i, v in enumerate(self.observed)}

    @cached_property
    def _ancestors(self) -> tuple[frozenset[int], ...]:
        anc: list[frozenset[int]] = [frozenset()] * len(self.vertices)
        for v in self.topological_order:
            acc = set()
            for p in self.parents[v]:
                acc.add(p)
                acc |= anc[p]
            anc[v] = frozenset(acc)
        return tuple(anc)

    def column_of(self, v: int) -> int:
        self._check(v)
        if v not in self._column:
            raise GraphError(f"vertex {v} is hidden and has no data column")
        return self._column[v]

    def label(self, v: int) -> str:
        self._check(v)
        return self.vertices[v].label

    def vertex_by_label(self, label: str) -> int:
        for v in self.vertices:
            if v.label == label:
                return v.id
        raise GraphError(f"unknown vertex label {label!r}")

    def observed_parents(self, v: int) -> frozenset[int]:
        return frozenset(p for p in self.parents[v] if self.vertices[p].observed)

    def _check(self, *vs: int) -> None:
        for v in vs:
            if not isinstance(v, (int,)) or not 0 <= v < len(self.vertices):
                raise GraphError(f"unknown vertex {v!r}")

    # -- serialization ---------------------------------------------------------

    def to_dict(self) -> dict:
        return {
            "vertices": [{"id": v.id, "label": v.label, "observed": v.observed} for v in self.vertices],
            "edges": [list(e) for e in sorted(self.edges)],
        }

    @classmethod
    def from_dict(cls, d: dict) -> "CausalGraph":
        try:
            verts = sorted(d["vertices"], key=lambda v: v["id"])
            vertices = tuple(Vertex(int(v["id"]), str(v["label"]), bool(v["observed"])) for v in verts)
            edges = frozenset((int(a), int(b)) for a, b in d["edges"])
        except (KeyError, TypeError, ValueError) as exc:
            raise GraphError(f"malformed graph document: {exc}") from None
        return cls(vertices, edges)

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=1)

    def save(self, path: str | Path) -> None:
        Path(path).write_text(self.to_json() + "\n", encoding="utf-8")

    @classmethod
    def load(cls, path: str | Path) -> "CausalGraph":
        return cls.from_dict(json.loads(Path(path).read_text(encoding="utf-8")))

    def relabel_observed(self, perm: Sequence[int]) -> "CausalGraph":
        """Return an isomorphic graph whose observed column ``c`` becomes ``perm[c]``.

        Hidden vertices keep their relative order after the observed block.
        """
        obs = self.observed
        if sorted(perm) != list(range(len(obs))):
            raise GraphError("perm must be a permutation of the observed columns")
        new_id = {}
        for c, v in enumerate(obs):
            new_id[v] = perm[c]
        for k, v in enumerate(self.hidden):
            new_id[v] = len(obs) + k
        labels = [""] * len(self.vertices)
        for v in self.vertices:
            labels[new_id[v.id]] = v.label
        return CausalGraph.from_edges(
            labels,
            [(new_id[a], new_id[b]) for a, b in self.edges],
            hidden=range(len(obs), len(self.vertices)),
        )


# -- pair classification --------------------------------------------------------


class Visibility(str, Enum):
    EDGE = "edge"
    NON_EDGE = "non_edge"
    INVISIBLE = "invisible"


@dataclass(frozen=True)
class PairClass:
    """Structural status of an observed pair; ``parent``/``child`` set only for edges."""

    kind: Visibility
    parent: int | None = None
    child: int | None = None

    @classmethod
    def edge(cls, parent: int, child: int) -> "PairClass":
        return cls(Visibility.EDGE, parent, child)

    @classmethod
    def non_edge(cls) -> "PairClass":
        return cls(Visibility.NON_EDGE)

    @classmethod
    def invisible(cls) -> "PairClass":
        return cls(Visibility.INVISIBLE)


# -- path machinery ---------------------------------------------------------------


def ancestors(g: CausalGraph, v: int) -> frozenset[int]:
    """Proper ancestors of ``v`` (never contains ``v``)."""
    g._check(v)
    return g._ancestors[v]


def descendants(g: CausalGraph, v: int) -> frozenset[int]:
    g._check(v)
    return frozenset(w for w in range(g.n_vertices) if v in g._ancestors[w])


def directed_paths(g: CausalGraph, src: int, dst: int) -> list[list[int]]:
    """All directed paths ``src -> ... -> dst`` as vertex lists, in DFS order."""
    g._check(src, dst)
    if src == dst:
        return [[src]]
    out: list[list[int]] = []
    # prune to vertices that can still reach dst
    useful = g._ancestors[dst] | {dst}

    def walk(path):
        for c in sorted(g.children[path[-1]]):
            if c == dst:
                out.append(path + [c])
            elif c in useful:
                walk(path + [c])

    if src in useful:
        walk([src])
    return out


def _endpoint_check(g: CausalGraph, xi: int, xj: int, xprime: Iterable[int]) -> frozenset[int]:
    g._check(xi, xj)
    xprime = frozenset(xprime)
    if xi == xj:
        raise GraphError("pair endpoints must differ")
    if xi not in xprime or xj not in xprime:
        raise GraphError("both endpoints must belong to the observed subset")
    for v in xprime:
        g._check(v)
        if not g.vertices[v].observed:
            raise GraphError(f"vertex {v} in the observed subset is hidden")
    return xprime


def has_ucp(g: CausalGraph, xi: int, xj: int, xprime: Iterable[int]) -> bool:
    """Unobserved causal path from ``xi`` to ``xj`` relative to ``xprime``.

    The last vertex before ``xj`` must lie outside ``xprime``; every directed
    path in a DAG is simple, so reaching such a parent from ``xi`` suffices.
    """
    xprime = _endpoint_check(g, xi, xj, xprime)
    return any(p not in xprime and xi in g._ancestors[p] for p in g.parents[xj])


def has_ubp(g: CausalGraph, xi: int, xj: int, xprime: Iterable[int]) -> bool:
    """Unobserved backdoor path between ``xi`` and ``xj`` relative to ``xprime``.

    Needs parents ``vk`` of ``xi`` and ``vl`` of ``xj``, both outside
    ``xprime``, with a common ancestor-or-self in the graph with the two
    endpoints deleted. Two directed paths from a shared source can always be
    trimmed to internally disjoint ones, so the simple-path requirement holds.
    """
    xprime = _endpoint_check(g, xi, xj, xprime)
    left = [p for p in g.parents[xi] if p not in xprime and p != xj]
    right = [p for p in g.parents[xj] if p not in xprime and p != xi]
    if not left or not right:
        return False
    blocked = {xi, xj}

    def up(start):
        seen = {start}
        stack = [start]
        while stack:
            v = stack.pop()
            for p in g.parents[v]:
                if p not in blocked and p not in seen:
                    seen.add(p)
                    stack.append(p)
        return seen

    left_up = set().union(*(up(p) for p in left))
    return any(not left_up.isdisjoint(up(p)) for p in right)


def d_separated(g: CausalGraph, a: int, b: int, z: Iterable[int]) -> bool:
    """Reachability ("Bayes-ball") test of ``a`` _||_ ``b`` | ``z``."""
    z = frozenset(z)
    g._check(a, b, *z)
    if a == b:
        raise GraphError("d-separation endpoints must differ")
    if a in z or b in z:
        raise GraphError("endpoints may not be in the conditioning set")
    # vertices with a descendant in z (including z itself) open colliders
    opens = set(z)
    for v in z:
        opens |= g._ancestors[v]
    # state: (vertex, arrived_via_child) -- True means we came up an edge v <- child
    visited = set()
    stack = [(a, True)]
    while stack:
        v, up = stack.pop()
        if (v, up) in visited:
            continue
        visited.add((v, up))
        if v == b:
            return False
        if up:
            if v not in z:
                stack.extend((p, True) for p in g.parents[v])
                stack.extend((c, False) for c in g.children[v])
        else:
            if v not in z:
                stack.extend((c, False) for c in g.children[v])
            if v in opens:
                stack.extend((p, True) for p in g.parents[v])
    return True


def ground_truth_pair_class(g: CausalGraph, xi: int, xj: int, xprime: Iterable[int] | None = None) -> PairClass:
    """Classify ``(xi, xj)`` as visible edge, visible non-edge or invisible."""
    xprime = frozenset(g.observed if xprime is None else xprime)
    if (
        has_ubp(g, xi, xj, xprime)
        or has_ucp(g, xi, xj, xprime)
        or has_ucp(g, xj, xi, xprime)
    ):
        return PairClass.invisible()
    if (xj, xi) in g.edges:
        return PairClass.edge(xj, xi)
    if (xi, xj) in g.edges:
        return PairClass.edge(xi, xj)
    return PairClass.non_edge()


def observed_pairs(g: CausalGraph) -> list[tuple[int, int]]:
    return list(combinations(g.observed, 2))
