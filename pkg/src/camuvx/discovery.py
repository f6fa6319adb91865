"""CAM-UV baseline and the CAM-UV-X extension.

Both searches are written against a test engine (see :mod:`camuvx.engines`),
so the same code runs on data or on the population oracle.

``A`` follows the convention ``A[i, j] = 1`` when ``x_j`` is a parent of
``x_i``, ``0`` when it is not, and ``NaN`` when the pair is left invisible.
"""
from __future__ import annotations

import json
from dataclasses import dataclass, field
from itertools import combinations
from pathlib import Path
from typing import Iterator, Sequence

import numpy as np

EDGE, NO_EDGE, UNKNOWN = 1.0, 0.0, np.nan


class DiscoveryError(RuntimeError):
    """An engine failure, annotated with where in the search it happened."""


class StateError(AssertionError):
    """A search state broke one of its structural invariants."""


@dataclass(frozen=True)
class SearchConfig:
    """Parameters shared by the searches.

    Attributes
    ----------
    alpha : float
        Independence is declared when a p-value is strictly above ``alpha``.
    max_parents : int
        Cap ``d`` on the size of every enumerated regression set.
    ci_test : str
        Conditional-independence test name (only ``"knn"``).
    forbidden : ndarray of bool, optional
        ``forbidden[i, j]`` means ``x_j`` may not be declared a parent of ``x_i``.
    seed : int
    """

    alpha: float = 0.1
    max_parents: int = 3
    ci_test: str = "knn"
    forbidden: np.ndarray | None = None
    seed: int = 0

    def __post_init__(self):
        if not 0.0 < self.alpha < 1.0:
            raise ValueError("alpha must lie strictly between 0 and 1")
        if self.max_parents < 1:
            raise ValueError("max_parents must be at least 1")
        if self.ci_test != "knn":
            raise ValueError(f"unsupported ci test {self.ci_test!r}")

    def allows(self, child: int, parent: int) -> bool:
        return self.forbidden is None or not bool(self.forbidden[child, parent])


def subsets(pool, max_size: int) -> Iterator[frozenset[int]]:
    """Subsets of ``pool`` by size, then lexicographically."""
    pool = sorted(pool)
    for r in range(min(max_size, len(pool)) + 1):
        for c in combinations(pool, r):
            yield frozenset(c)


def _blank(p: int) -> np.ndarray:
    a = np.full((p, p), UNKNOWN)
    np.fill_diagonal(a, NO_EDGE)
    return a


def _isnan(v: float) -> bool:
    return v != v


# -- state ------------------------------------------------------------------------


@dataclass
class DiscoveryResult:
    """Output of a CAM-UV-X run.

    Attributes
    ----------
    A : ndarray
        Final adjacency after every phase.
    visibility : ndarray
        Snapshot of ``A`` right after the visibility pass; every pair is
        ``(1, 0)``, ``(0, 1)``, ``(0, 0)`` or ``(NaN, NaN)`` here.
    M, H : list of set
        Certified ancestors / certified non-ancestors of each variable.
    C : list of set
        ``C[k]`` holds unordered pairs ``{i, j}`` with ``x_k`` a parent of one of them.
    initial : ndarray
        Adjacency the run started from (CAM-UV output or all-Unknown).
    """

    A: np.ndarray
    visibility: np.ndarray
    M: list[set[int]]
    H: list[set[int]]
    C: list[set[frozenset[int]]]
    initial: np.ndarray
    labels: tuple[str, ...] = ()
    skipped: list[str] = field(default_factory=list)

    @property
    def p(self) -> int:
        return self.A.shape[0]

    def to_dict(self) -> dict:
        def mat(a):
            return [[None if _isnan(v) else int(v) for v in row] for row in a]

        return {
            "labels": list(self.labels),
            "A": mat(self.A),
            "visibility": mat(self.visibility),
            "initial": mat(self.initial),
            "M": [sorted(s) for s in self.M],
            "H": [sorted(s) for s in self.H],
            "C": [sorted(sorted(pair) for pair in s) for s in self.C],
            "skipped": list(self.skipped),
        }

    @classmethod
    def from_dict(cls, d: dict) -> "DiscoveryResult":
        def mat(rows):
            return np.array([[np.nan if v is None else float(v) for v in row] for row in rows], dtype=float)

        return cls(
            A=mat(d["A"]),
            visibility=mat(d["visibility"]),
            M=[set(s) for s in d["M"]],
            H=[set(s) for s in d["H"]],
            C=[{frozenset(pair) for pair in s} for s in d["C"]],
            initial=mat(d["initial"]),
            labels=tuple(d.get("labels", ())),
            skipped=list(d.get("skipped", ())),
        )

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=1)

    def save(self, path: str | Path) -> None:
        Path(path).write_text(self.to_json() + "\n", encoding="utf-8")

    @classmethod
    def load(cls, path: str | Path) -> "DiscoveryResult":
        return cls.from_dict(json.loads(Path(path).read_text(encoding="utf-8")))

    def pair_status(self, i: int, j: int) -> tuple[str, int | None]:
        """``("edge", parent)``, ``("non_edge", None)`` or ``("invisible", None)``."""
        return pair_status(self.visibility, i, j)


def pair_status(a: np.ndarray, i: int, j: int) -> tuple[str, int | None]:
    aij, aji = a[i, j], a[j, i]
    if aij == EDGE:
        return "edge", j
    if aji == EDGE:
        return "edge", i
    if _isnan(aij) or _isnan(aji):
        return "invisible", None
    return "non_edge", None


def check_trichotomy(a: np.ndarray) -> None:
    """Every off-diagonal pair is a directed edge, a non-edge or fully Unknown."""
    p = a.shape[0]
    if a.shape != (p, p):
        raise StateError("adjacency must be square")
    for i in range(p):
        if a[i, i] != NO_EDGE:
            raise StateError(f"diagonal entry {i} is not 0")
        for j in range(i + 1, p):
            x, y = a[i, j], a[j, i]
            ok = (_isnan(x) and _isnan(y)) or (x, y) in ((EDGE, NO_EDGE), (NO_EDGE, EDGE), (NO_EDGE, NO_EDGE))
            if not ok:
                raise StateError(f"pair ({i}, {j}) holds ({x}, {y})")


def check_consistent(a: np.ndarray) -> None:
    """Weaker invariant for the final matrix: no pair is a two-way edge."""
    p = a.shape[0]
    for i in range(p):
        if a[i, i] != NO_EDGE:
            raise StateError(f"diagonal entry {i} is not 0")
        for j in range(i + 1, p):
            x, y = a[i, j], a[j, i]
            if x == EDGE and y != NO_EDGE or y == EDGE and x != NO_EDGE:
                raise StateError(f"pair ({i}, {j}) holds ({x}, {y})")


def check_refines(before: np.ndarray, after: np.ndarray) -> None:
    """``after`` only fills in entries that were Unknown in ``before``."""
    known = ~np.isnan(before)
    if not np.array_equal(before[known], after[known]):
        raise StateError("a determined entry changed value")


class _Search:
    """Mutable state of one CAM-UV-X run."""

    def __init__(self, engine, cfg: SearchConfig, a0: np.ndarray):
        self.engine = engine
        self.cfg = cfg
        self.p = a0.shape[0]
        self.A = a0.copy()
        self.M: list[set[int]] = [set() for _ in range(self.p)]
        self.H: list[set[int]] = [set() for _ in range(self.p)]
        self.C: list[set[frozenset[int]]] = [set() for _ in range(self.p)]
        self.skipped: list[str] = []
        # A as it stood after the visibility pass; None until that pass ends
        self.visible: np.ndarray | None = None

    # engine calls carry their context into any failure
    def rp(self, phase, i, m, j, n) -> float:
        try:
            return self.engine.residual_pvalue(i, m, j, n)
        except Exception as exc:
            raise DiscoveryError(
                f"{phase}: residual test x{i}|{sorted(m)} vs x{j}|{sorted(n)} failed: {exc}"
            ) from exc

    def cp(self, phase, a, b, z) -> float:
        try:
            return self.engine.ci_pvalue(a, b, z)
        except Exception as exc:
            raise DiscoveryError(f"{phase}: CI test x{a} vs x{b} | {sorted(z)} failed: {exc}") from exc

    def indep(self, pv: float) -> bool:
        return pv > self.cfg.alpha

    # guarded writes: only Unknown entries are filled
    def set_entry(self, i: int, j: int, value: float, why: str) -> bool:
        cur = self.A[i, j]
        if not _isnan(cur):
            if cur != value:
                self.skipped.append(f"{why}: A[{i},{j}] is {cur:g}, kept over {value:g}")
            return False
        if value == EDGE and not self.cfg.allows(i, j):
            self.skipped.append(f"{why}: x{j} -> x{i} is forbidden")
            return False
        self.A[i, j] = value
        return True

    def set_edge(self, child: int, parent: int, why: str) -> bool:
        """``x_parent -> x_child``; a no-op unless both entries allow it."""
        if _isnan(self.A[child, parent]) and self.A[parent, child] == EDGE:
            self.skipped.append(f"{why}: x{child} -> x{parent} already set")
            return False
        if not self.set_entry(child, parent, EDGE, why):
            return False
        self.set_entry(parent, child, NO_EDGE, why)
        return True

    def add_m(self, i: int, k: int, why: str) -> None:
        if k in self.H[i]:
            self.skipped.append(f"{why}: x{k} is already a certified non-ancestor of x{i}")
            return
        self.M[i].add(k)

    def add_h(self, i: int, k: int, why: str) -> None:
        if k in self.M[i]:
            self.skipped.append(f"{why}: x{k} is already a certified ancestor of x{i}")
            return
        self.H[i].add(k)

    def parents_in_a(self, i: int) -> set[int]:
        return {v for v in range(self.p) if self.A[i, v] == EDGE}

    def certified_ancestors(self, i: int) -> set[int]:
        """Closure of Edge entries, ``M`` sets and the ``C`` rule.

        The ``C`` rule: if ``{u, v}`` is in ``C[k]`` and both ``u`` and ``v``
        are ancestors-or-self of ``x_i``, then ``x_k`` is an ancestor of ``x_i``.
        """
        anc = [set(self.M[v]) | self.parents_in_a(v) for v in range(self.p)]
        changed = True
        while changed:
            changed = False
            for v in range(self.p):
                grown = set(anc[v])
                for u in anc[v]:
                    grown |= anc[u]
                closed = grown | {v}
                for k in range(self.p):
                    if k == v or k in grown:
                        continue
                    if any(pair <= closed for pair in self.C[k]):
                        grown.add(k)
                grown.discard(v)
                if grown != anc[v]:
                    anc[v] = grown
                    changed = True
        return anc[i]

    def result(self, visibility: np.ndarray, initial: np.ndarray, labels=()) -> DiscoveryResult:
        return DiscoveryResult(
            self.A.copy(), visibility, self.M, self.H, self.C, initial, tuple(labels), self.skipped
        )


# -- CAM-UV -----------------------------------------------------------------------


def cam_uv(engine, cfg: SearchConfig) -> np.ndarray:
    """CAM-UV baseline returning a tri-adjacency.

    Phase 1 grows parent sets: for subsets ``K`` of size ``t`` (reset to 2 after
    any change) the candidate sink ``x_b`` maximises the smallest p-value of
    ``x_b - G(P_b + K - b)`` against ``x_j - G(P_j)``, ``j`` in ``K - b``. Phase 2
    prunes parents whose removal keeps the residuals independent. Pairs are
    then marked Edge, NoEdge or Unknown.
    """
    p = engine.p
    if p < 2:
        raise ValueError("need at least two variables")
    s = _Search(engine, cfg, _blank(p))
    alpha = cfg.alpha
    empty = frozenset()

    nbr = [set() for _ in range(p)]
    for i, j in combinations(range(p), 2):
        if not s.indep(s.rp("cam_uv/neighbourhood", i, empty, j, empty)):
            nbr[i].add(j)
            nbr[j].add(i)

    P = [set() for _ in range(p)]
    max_t = min(cfg.max_parents + 1, p)
    t = 2
    while t <= max_t:
        changed = False
        for K in combinations(range(p), t):
            if any(b in P[a] or a in P[b] for a, b in combinations(K, 2)):
                continue
            best, best_p = None, -1.0
            for b in K:
                rest = [j for j in K if j != b]
                if not all(j in nbr[b] for j in rest):
                    continue
                if not all(cfg.allows(b, j) for j in rest):
                    continue
                mb = frozenset(P[b]) | frozenset(rest)
                worst = min(s.rp("cam_uv/phase1", b, mb, j, frozenset(P[j])) for j in rest)
                if worst > best_p:
                    best, best_p = b, worst
            if best is None or not best_p > alpha:
                continue
            rest = [j for j in K if j != best]
            # each new parent must actually be needed
            own = frozenset(P[best])
            if any(s.indep(s.rp("cam_uv/phase1", best, own, j, frozenset(P[j]))) for j in rest):
                continue
            P[best].update(rest)
            changed = True
        t = 2 if changed else t + 1

    for i in range(p):
        dropped: set[int] = set()
        for j in sorted(P[i]):
            keep = frozenset(P[i] - {j} - dropped)
            if s.indep(s.rp("cam_uv/phase2", i, keep, j, frozenset(P[j]))):
                dropped.add(j)
        P[i] -= dropped

    a = _blank(p)
    for i, j in combinations(range(p), 2):
        if j in P[i]:
            a[i, j], a[j, i] = EDGE, NO_EDGE
        elif i in P[j]:
            a[j, i], a[i, j] = EDGE, NO_EDGE
        elif j not in nbr[i]:
            a[i, j] = a[j, i] = NO_EDGE
        elif s.indep(s.rp("cam_uv/classify", i, frozenset(P[i]), j, frozenset(P[j]))):
            a[i, j] = a[j, i] = NO_EDGE
    return a


# -- CAM-UV-X phases --------------------------------------------------------------


def check_visible(s: _Search, i: int, j: int) -> None:
    """Try to turn the Unknown pair ``(i, j)`` into a visible edge or non-edge."""
    a = s.A
    if not (_isnan(a[i, j]) and _isnan(a[j, i])):
        return
    pi, pj = s.parents_in_a(i), s.parents_in_a(j)
    q = {k for k in range(s.p) if _isnan(a[j, k]) or _isnan(a[i, k])} | pi | pj
    q -= {i, j}
    d = s.cfg.max_parents
    i_not_parent = j_not_parent = False
    for m in subsets(q, d):
        for n in subsets(q, d):
            if s.indep(s.rp("check_visible", i, m, j, n)):
                s.set_entry(i, j, NO_EDGE, "check_visible")
                s.set_entry(j, i, NO_EDGE, "check_visible")
                return
            if not i_not_parent and s.indep(s.rp("check_visible", i, m | {j}, j, n)):
                i_not_parent = True
            if not j_not_parent and s.indep(s.rp("check_visible", i, m, j, n | {i})):
                j_not_parent = True
            if i_not_parent and j_not_parent:
                s.set_entry(i, j, NO_EDGE, "check_visible")
                s.set_entry(j, i, NO_EDGE, "check_visible")
                return
    if i_not_parent:
        s.set_edge(i, j, "check_visible")
    if j_not_parent:
        s.set_edge(j, i, "check_visible")


def check_on_path(s: _Search, i: int, j: int) -> None:
    """Record every ``x_k`` that must be a parent of ``x_i`` or ``x_j``.

    Candidates are the ``x_k`` whose relation to ``x_i`` or ``x_j`` was left
    invisible by the visibility pass. Reading that from the snapshot rather
    than the live matrix keeps the output independent of pair order.
    """
    a = s.A
    vis = s.visible if s.visible is not None else s.A
    d = s.cfg.max_parents
    everyone = set(range(s.p))
    for k in range(s.p):
        if k in (i, j) or not (_isnan(vis[i, k]) or _isnan(vis[j, k])):
            continue
        on_path = True
        for m in subsets(everyone - {i, k}, d):
            for n in subsets(everyone - {j, k}, d):
                if s.indep(s.rp("check_on_path", i, m, j, n)):
                    on_path = False
                    break
            if not on_path:
                break
        if not on_path:
            continue
        s.C[k].add(frozenset((i, j)))
        if a[i, j] == EDGE:
            s.add_m(i, k, "check_on_path")
            s.add_h(k, i, "check_on_path")
            s.set_entry(k, i, NO_EDGE, "check_on_path")
        elif a[j, i] == EDGE:
            s.add_m(j, k, "check_on_path")
            s.add_h(k, j, "check_on_path")
            s.set_entry(k, j, NO_EDGE, "check_on_path")


def check_ci(s: _Search, i: int, j: int) -> None:
    """If an ancestor of ``x_i`` is cut off from ``x_j`` by ``x_i``, ``x_i`` precedes ``x_j``."""
    for k in sorted(s.certified_ancestors(i)):
        if k == j:
            continue
        if s.indep(s.cp("check_ci", k, j, (i,))):
            s.add_h(i, j, "check_ci")
            s.set_entry(i, j, NO_EDGE, "check_ci")
            s.add_m(j, i, "check_ci")
            return


def check_parent_invi(s: _Search, max_rounds: int | None = None) -> None:
    """Resolve ``C`` claims: if ``x_k`` cannot be a parent of ``x_i`` it is one of ``x_j``."""
    a = s.A
    limit = max_rounds or (s.p * s.p + 1)
    for _ in range(limit):
        change = False
        for k in range(s.p):
            for pair in sorted(tuple(sorted(c)) for c in s.C[k]):
                for i, j in (pair, pair[::-1]):
                    if _isnan(a[j, k]) and (k in s.H[i] or a[i, k] == NO_EDGE):
                        if s.set_edge(j, k, "check_parent_invi"):
                            change = True
        if not change:
            return
    raise StateError("check_parent_invi did not reach a fixpoint")


def cam_uvx(
    engine,
    cfg: SearchConfig,
    initial: np.ndarray | None = None,
    cold_start: bool = False,
    labels: Sequence[str] = (),
    validate: bool = True,
) -> DiscoveryResult:
    """Run CAM-UV-X.

    Parameters
    ----------
    engine
        ``OracleEngine`` or ``SampleEngine``.
    cfg : SearchConfig
    initial : ndarray, optional
        Precomputed CAM-UV adjacency (reused instead of rerunning the baseline).
    cold_start : bool
        Start from an all-Unknown matrix instead of the CAM-UV output.
    labels : sequence of str
        Column names stored on the result.
    validate : bool
        Check state invariants between phases.
    """
    p = engine.p
    if p < 2:
        raise ValueError("need at least two variables")
    if cold_start:
        a0 = _blank(p)
    elif initial is not None:
        a0 = np.array(initial, dtype=float)
        if a0.shape != (p, p):
            raise ValueError("initial adjacency has the wrong shape")
    else:
        a0 = cam_uv(engine, cfg)
    if validate:
        check_trichotomy(a0)
    s = _Search(engine, cfg, a0)

    unknown = [(i, j) for i, j in combinations(range(p), 2) if _isnan(s.A[i, j]) and _isnan(s.A[j, i])]
    for i, j in unknown:
        check_visible(s, i, j)
    visibility = s.A.copy()
    s.visible = visibility
    if validate:
        check_trichotomy(visibility)
        check_refines(a0, visibility)

    known = [
        (i, j) for i, j in combinations(range(p), 2) if not _isnan(s.A[i, j]) and not _isnan(s.A[j, i])
    ]
    for i, j in known:
        check_on_path(s, i, j)
    if validate:
        check_refines(visibility, s.A)
        check_consistent(s.A)

    unknown = [
        (i, j) for i in range(p) for j in range(p) if i != j and _isnan(s.A[i, j]) and _isnan(s.A[j, i])
    ]
    for i, j in unknown:
        check_ci(s, i, j)
    check_parent_invi(s)
    if validate:
        check_refines(visibility, s.A)
        check_consistent(s.A)
        for v in range(p):
            if s.M[v] & s.H[v]:
                raise StateError(f"M and H overlap for x{v}")
    return s.result(visibility, a0, labels)


__all__ = [
    "DiscoveryError",
    "DiscoveryResult",
    "SearchConfig",
    "StateError",
    "cam_uv",
    "cam_uvx",
    "check_ci",
    "check_consistent",
    "check_on_path",
    "check_parent_invi",
    "check_refines",
    "check_trichotomy",
    "check_visible",
    "pair_status",
    "subsets",
]
