"""Population-level answers to the residual-independence and CI queries.

Residual ``x_i - G(M)`` is modelled by the set of external noises it still
carries: ``n_i`` itself plus the noise of every vertex that reaches ``x_i``
through a parent not in ``M`` (hidden parents are never in ``M``). Two
residuals are independent iff their noise sets are disjoint.
"""
from __future__ import annotations

from itertools import combinations, product
from typing import Iterable, Iterator, Sequence

from .graph import CausalGraph, GraphError, PairClass, d_separated


def _subsets(pool: Iterable[int], max_size: int | None = None) -> Iterator[frozenset[int]]:
    pool = sorted(pool)
    top = len(pool) if max_size is None else min(max_size, len(pool))
    for r in range(top + 1):
        for c in combinations(pool, r):
            yield frozenset(c)


def residual_noise_set(g: CausalGraph, xi: int, m: Iterable[int]) -> frozenset[int]:
    m = frozenset(m)
    g._check(xi, *m)
    if xi in m:
        raise GraphError("regressed variable cannot be in its own regression set")
    for v in m:
        if not g.vertices[v].observed:
            raise GraphError(f"regression set contains hidden vertex {v}")
    return _noise(g, xi, m)


def _noise(g: CausalGraph, xi: int, m: frozenset[int]) -> frozenset[int]:
    acc = {xi}
    for p in g.parents[xi]:
        if p not in m:
            acc.add(p)
            acc |= g._ancestors[p]
    return frozenset(acc)


def oracle_residual_independent(g: CausalGraph, xi: int, m: Iterable[int], xj: int, n: Iterable[int]) -> bool:
    m, n = frozenset(m), frozenset(n)
    if xi == xj:
        raise GraphError("residual test needs two distinct variables")
    if xj in n:
        raise GraphError("regressed variable cannot be in its own regression set")
    return residual_noise_set(g, xi, m).isdisjoint(residual_noise_set(g, xj, n))


def oracle_ci(g: CausalGraph, a: int, b: int, z: Iterable[int]) -> bool:
    return d_separated(g, a, b, z)


class NoiseCalculus:
    """Memoised noise sets for one graph; the fast path behind the oracle engine."""

    def __init__(self, g: CausalGraph):
        self.g = g
        self._cache: dict[tuple[int, frozenset[int]], frozenset[int]] = {}

    def noise(self, xi: int, m: frozenset[int]) -> frozenset[int]:
        key = (xi, m)
        out = self._cache.get(key)
        if out is None:
            out = self._cache[key] = _noise(self.g, xi, m)
        return out

    def independent(self, xi: int, m: frozenset[int], xj: int, n: frozenset[int]) -> bool:
        return self.noise(xi, m).isdisjoint(self.noise(xj, n))


# -- existence-quantified conditions ---------------------------------------------


def _pool(g: CausalGraph, xi: int, xj: int, xprime: frozenset[int], pruned: bool) -> frozenset[int]:
    base = xprime - {xi, xj}
    if pruned:
        base = base & (g.observed_parents(xi) | g.observed_parents(xj))
    return base


def exists_nonedge_regression(g, xi, xj, xprime=None, pruned=False) -> bool:
    """Some ``M, N`` in ``X' \\ {xi, xj}`` make the plain residuals independent."""
    xprime = frozenset(g.observed if xprime is None else xprime)
    calc = NoiseCalculus(g)
    pool = _pool(g, xi, xj, xprime, pruned)
    return any(calc.independent(xi, m, xj, n) for m in _subsets(pool) for n in _subsets(pool))


def exists_parent_regression(g, parent, child, xprime=None, pruned=False) -> bool:
    """Some ``M`` (containing ``parent``) and ``N`` free of both make residuals independent.

    This is the existence half of the visible-parent characterisation, in the
    form where the parent must sit in the child's regression set.
    """
    xprime = frozenset(g.observed if xprime is None else xprime)
    calc = NoiseCalculus(g)
    pool = _pool(g, child, parent, xprime, pruned)
    return any(
        calc.independent(child, m | {parent}, parent, n) for m in _subsets(pool) for n in _subsets(pool)
    )


def exists_parent_regression_loose(g, parent, child, xprime=None) -> bool:
    """Existence half with ``M`` ranging over all of ``X' \\ {child}``."""
    xprime = frozenset(g.observed if xprime is None else xprime)
    calc = NoiseCalculus(g)
    return any(
        calc.independent(child, m, parent, n)
        for m in _subsets(xprime - {child})
        for n in _subsets(xprime - {child, parent})
    )


def parent_always_dependent(g, parent, child, xprime=None) -> bool:
    """Residuals stay dependent while ``parent`` is kept out of the child's set."""
    xprime = frozenset(g.observed if xprime is None else xprime)
    calc = NoiseCalculus(g)
    return not any(
        calc.independent(child, m, parent, n)
        for m in _subsets(xprime - {child, parent})
        for n in _subsets(xprime - {parent})
    )


def always_dependent(g, xi, xj, xprime=None) -> bool:
    """Residuals are dependent for every ``M`` in ``X' \\ {xi}`` and ``N`` in ``X' \\ {xj}``."""
    xprime = frozenset(g.observed if xprime is None else xprime)
    calc = NoiseCalculus(g)
    return not any(
        calc.independent(xi, m, xj, n) for m in _subsets(xprime - {xi}) for n in _subsets(xprime - {xj})
    )


def oracle_pair_class(g: CausalGraph, xi: int, xj: int, xprime=None, pruned=False) -> PairClass:
    """Pair status derived purely from residual-independence predicates."""
    xprime = frozenset(g.observed if xprime is None else xprime)
    if exists_nonedge_regression(g, xi, xj, xprime, pruned):
        return PairClass.non_edge()
    for parent, child in ((xj, xi), (xi, xj)):
        if parent_always_dependent(g, parent, child, xprime) and exists_parent_regression(
            g, parent, child, xprime, pruned
        ):
            return PairClass.edge(parent, child)
    return PairClass.invisible()


# -- conditions certifying a parent of one endpoint ------------------------------


def on_path_condition(g: CausalGraph, xi: int, xj: int, xk: int, xprime=None) -> bool:
    """Residuals of ``xi`` and ``xj`` stay dependent whenever ``xk`` is left out of both sets."""
    xprime = frozenset(g.observed if xprime is None else xprime)
    calc = NoiseCalculus(g)
    return not any(
        calc.independent(xi, m, xj, n)
        for m in _subsets(xprime - {xi, xk})
        for n in _subsets(xprime - {xj, xk})
    )


def _splits(k: frozenset[int]) -> Iterator[tuple[frozenset[int], frozenset[int]]]:
    """Pairs ``(Q1, Q2)`` of subsets of ``k`` whose union is ``k``."""
    items = sorted(k)
    for labels in product((0, 1, 2), repeat=len(items)):
        q1 = frozenset(v for v, t in zip(items, labels) if t in (0, 2))
        q2 = frozenset(v for v, t in zip(items, labels) if t in (1, 2))
        yield q1, q2


def edge_split_condition(g: CausalGraph, xi: int, xj: int, k: Iterable[int], xprime=None) -> bool:
    """``K`` can be split across both regressions (with ``xj`` in the child's set) to reach independence."""
    xprime = frozenset(g.observed if xprime is None else xprime)
    k = frozenset(k)
    calc = NoiseCalculus(g)
    pool = xprime - {xi, xj} - k
    return any(
        calc.independent(xi, m | {xj} | q1, xj, n | q2)
        for q1, q2 in _splits(k)
        for m in _subsets(pool)
        for n in _subsets(pool)
    )


def nonedge_split_condition(g: CausalGraph, xi: int, xj: int, k: Iterable[int], xprime=None) -> bool:
    xprime = frozenset(g.observed if xprime is None else xprime)
    k = frozenset(k)
    calc = NoiseCalculus(g)
    pool = xprime - {xi, xj} - k
    return any(
        calc.independent(xi, m | q1, xj, n | q2)
        for q1, q2 in _splits(k)
        for m in _subsets(pool)
        for n in _subsets(pool)
    )


def independence_witnesses(
    g: CausalGraph, xi: int, xj: int, m_pool: Sequence[int], n_pool: Sequence[int]
) -> list[tuple[frozenset[int], frozenset[int]]]:
    calc = NoiseCalculus(g)
    return [
        (m, n) for m in _subsets(m_pool) for n in _subsets(n_pool) if calc.independent(xi, m, xj, n)
    ]


__all__ = [
    "NoiseCalculus",
    "always_dependent",
    "edge_split_condition",
    "exists_nonedge_regression",
    "exists_parent_regression",
    "exists_parent_regression_loose",
    "independence_witnesses",
    "nonedge_split_condition",
    "on_path_condition",
    "oracle_ci",
    "oracle_pair_class",
    "oracle_residual_independent",
    "parent_always_dependent",
    "residual_noise_set",
]
