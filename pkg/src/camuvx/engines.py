"""Test engines answering the two query kinds the search algorithms pose.

``residual_pvalue(i, M, j, N)``
    p-value for ``x_i - G(M)`` independent of ``x_j - G(N)``.
``ci_pvalue(a, b, Z)``
    p-value for ``x_a`` independent of ``x_b`` given ``x_Z``.

Indices are data columns. The oracle engine answers with exact 1.0
(independent) or 0.0 (dependent), so any ``0 < alpha < 1`` reproduces the
population decision under the strict ``p > alpha`` rule.
"""
from __future__ import annotations

from collections import OrderedDict
from typing import Iterable

import numpy as np

from .gam import fit_residual
from .graph import CausalGraph, d_separated
from .independence import DegenerateInputError, GramCache, cmi_knn_pvalue, hsic_from_grams, median_width
from .oracle import NoiseCalculus


def _key(m: Iterable[int]) -> frozenset[int]:
    return frozenset(int(v) for v in m)


class OracleEngine:
    """Population answers computed from a known graph.

    Parameters
    ----------
    graph : CausalGraph
        Truth; data column ``c`` is the ``c``-th observed vertex.
    """

    kind = "oracle"

    def __init__(self, graph: CausalGraph):
        self.graph = graph
        self._calc = NoiseCalculus(graph)
        self._obs = graph.observed
        self.n_queries = {"residual": 0, "ci": 0}

    @property
    def p(self) -> int:
        return len(self._obs)

    def _ids(self, cols: Iterable[int]) -> frozenset[int]:
        return frozenset(self._obs[c] for c in cols)

    def residual_pvalue(self, i: int, m: Iterable[int], j: int, n: Iterable[int]) -> float:
        m, n = _key(m), _key(n)
        if i in m or j in n or i == j:
            raise ValueError("invalid residual query")
        self.n_queries["residual"] += 1
        ok = self._calc.independent(self._obs[i], self._ids(m), self._obs[j], self._ids(n))
        return 1.0 if ok else 0.0

    def ci_pvalue(self, a: int, b: int, z: Iterable[int]) -> float:
        z = _key(z)
        self.n_queries["ci"] += 1
        return 1.0 if d_separated(self.graph, self._obs[a], self._obs[b], self._ids(z)) else 0.0


class SampleEngine:
    """Finite-sample answers: additive-model residuals, HSIC and kNN-CMI.

    Residuals, centred Gram matrices and p-values are cached. Gram matrices
    are the memory hog (``8 n^2`` bytes each), so they sit in an LRU bounded
    by ``gram_cache_bytes``.
    """

    kind = "sample"

    def __init__(
        self,
        data: np.ndarray,
        seed: int = 0,
        ci_test: str = "knn",
        k: int = 10,
        k_perm: int = 5,
        n_perm: int = 500,
        gram_cache_bytes: int = 768 * 2**20,
    ):
        data = np.asarray(data, dtype=np.float64)
        if data.ndim != 2 or data.shape[1] < 2:
            raise ValueError("data must be an (n, p) matrix with p >= 2")
        if not np.all(np.isfinite(data)):
            raise ValueError("data contains non-finite values")
        if ci_test != "knn":
            raise ValueError(f"unsupported ci test {ci_test!r}; only 'knn' is available")
        self.data = data
        self.seed = int(seed)
        self.k, self.k_perm, self.n_perm = k, k_perm, n_perm
        self._res: dict[tuple[int, frozenset[int]], np.ndarray] = {}
        self._grams: OrderedDict[tuple[int, frozenset[int]], GramCache | None] = OrderedDict()
        n = data.shape[0]
        self._gram_cap = max(4, gram_cache_bytes // (8 * n * n))
        self._pvals: dict = {}
        self._ci: dict = {}
        self.n_queries = {"residual": 0, "ci": 0, "fits": 0, "grams": 0}

    @property
    def p(self) -> int:
        return self.data.shape[1]

    def residual(self, i: int, m: Iterable[int]) -> np.ndarray:
        key = (int(i), _key(m))
        r = self._res.get(key)
        if r is None:
            cols = sorted(key[1])
            r = fit_residual(self.data[:, i], self.data[:, cols] if cols else None)
            self._res[key] = r
            self.n_queries["fits"] += 1
        return r

    def _gram(self, i: int, m: frozenset[int]) -> GramCache | None:
        key = (i, m)
        if key in self._grams:
            self._grams.move_to_end(key)
            return self._grams[key]
        r = self.residual(i, m)
        try:
            g = GramCache.build(r, width=median_width(r))
        except DegenerateInputError:
            g = None  # a constant residual is independent of everything
        self.n_queries["grams"] += 1
        self._grams[key] = g
        if len(self._grams) > self._gram_cap:
            self._grams.popitem(last=False)
        return g

    def residual_pvalue(self, i: int, m: Iterable[int], j: int, n: Iterable[int]) -> float:
        a, b = (int(i), _key(m)), (int(j), _key(n))
        if a[0] in a[1] or b[0] in b[1] or a[0] == b[0]:
            raise ValueError("invalid residual query")
        key = frozenset((a, b))
        p = self._pvals.get(key)
        if p is None:
            self.n_queries["residual"] += 1
            ga, gb = self._gram(*a), self._gram(*b)
            p = 1.0 if ga is None or gb is None else hsic_from_grams(ga, gb).p_value
            self._pvals[key] = p
        return p

    def ci_pvalue(self, a: int, b: int, z: Iterable[int]) -> float:
        z = tuple(sorted(_key(z)))
        key = (min(a, b), max(a, b), z)
        p = self._ci.get(key)
        if p is None:
            self.n_queries["ci"] += 1
            seed = int(np.random.SeedSequence([self.seed, key[0], key[1], *z]).generate_state(1)[0])
            zc = self.data[:, list(z)] if z else None
            p = cmi_knn_pvalue(
                self.data[:, a], self.data[:, b], zc, seed=seed, k=self.k, k_perm=self.k_perm, n_perm=self.n_perm
            ).p_value
            self._ci[key] = p
        return p


__all__ = ["OracleEngine", "SampleEngine"]
