"""Finite-sample independence tests.

``hsic_pvalue``
    HSIC with Gaussian kernels, median-heuristic widths and a gamma
    approximation to the null distribution of ``n * HSIC``.
``cmi_knn_pvalue``
    Nearest-neighbour conditional mutual information with a local
    permutation null (shuffles of ``x`` restricted to neighbourhoods in
    ``z``-space).
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Any

import numpy as np
from scipy.spatial import cKDTree
from scipy.special import gammaincc

from . import _kernels


class DegenerateInputError(ValueError):
    """Raised when a column carries no variation to test."""


@dataclass(frozen=True)
class TestResult:
    statistic: float
    p_value: float
    method: str
    params: dict[str, Any] = field(default_factory=dict)
    seed: int | None = None

    __test__ = False  # keep pytest from collecting this as a test class


def _as_2d(a, name: str) -> np.ndarray:
    a = np.asarray(a, dtype=np.float64)
    if a.ndim == 1:
        a = a[:, None]
    if a.ndim != 2:
        raise ValueError(f"{name} must be a column or an (n, d) matrix")
    if not np.all(np.isfinite(a)):
        raise ValueError(f"{name} contains non-finite values")
    return a


def median_width(x: np.ndarray) -> float:
    """``sqrt(0.5 * median squared distance)`` over distinct pairs."""
    x = _as_2d(x, "x")
    n = x.shape[0]
    d2 = np.zeros((n, n))
    for c in range(x.shape[1]):
        d2 += (x[:, c][:, None] - x[:, c][None, :]) ** 2
    vals = d2[np.triu_indices(n, 1)]
    vals = vals[vals > 0]
    if vals.size == 0:
        raise DegenerateInputError("column has zero variance")
    return float(np.sqrt(0.5 * np.median(vals)))


@dataclass(frozen=True)
class GramCache:
    """Centred Gram matrix of one column plus the moments the gamma null needs."""

    kc: np.ndarray
    mu: float
    width: float

    @classmethod
    def build(cls, x, width: float | None = None, backend=None) -> "GramCache":
        x = _as_2d(x, "x")
        if width is None:
            width = median_width(x)
        be = backend or _kernels.backend
        kc, mu = be.centered_gram(x, width)
        return cls(kc, mu, float(width))


def hsic_from_grams(gx: GramCache, gy: GramCache, backend=None) -> TestResult:
    n = gx.kc.shape[0]
    if gy.kc.shape[0] != n:
        raise ValueError("columns differ in length")
    if n < 6:
        raise ValueError("gamma approximation needs at least 6 samples")
    be = backend or _kernels.backend
    s1, s2 = be.hsic_sums(gx.kc, gy.kc)
    test_stat = s1 / n
    var = s2 / 36.0 / n / (n - 1)
    var *= 72.0 * (n - 4) * (n - 5) / n / (n - 1) / (n - 2) / (n - 3)
    mean = (1.0 + gx.mu * gy.mu - gx.mu - gy.mu) / n
    if var <= 0 or mean <= 0:
        p = 1.0
    else:
        shape = mean * mean / var
        scale = var * n / mean
        p = float(gammaincc(shape, max(test_stat, 0.0) / scale))
    return TestResult(
        statistic=s1 / (n * n),
        p_value=min(max(p, 0.0), 1.0),
        method="hsic-gamma",
        params={"width_x": gx.width, "width_y": gy.width},
    )


def hsic_statistic(u, v) -> float:
    """Biased HSIC, ``trace(K H L H) / n**2``."""
    return hsic_pvalue(u, v).statistic


def hsic_pvalue(u, v, backend=None) -> TestResult:
    """HSIC independence test with a gamma-approximated null.

    Parameters
    ----------
    u, v : array_like
        Columns (or ``(n, d)`` blocks) of equal length ``n >= 20``.

    Returns
    -------
    TestResult
        ``statistic`` is the biased HSIC estimate; ``p_value`` comes from the
        upper tail of the moment-matched gamma law.
    """
    u = _as_2d(u, "u")
    v = _as_2d(v, "v")
    if u.shape[0] != v.shape[0]:
        raise ValueError("columns differ in length")
    if u.shape[0] < 20:
        raise ValueError("HSIC test needs at least 20 samples")
    return hsic_from_grams(GramCache.build(u, backend=backend), GramCache.build(v, backend=backend), backend)


# -- kNN conditional mutual information -------------------------------------------


def _rank_with_jitter(a: np.ndarray, rng: np.random.Generator) -> np.ndarray:
    std = a.std(axis=0)
    std[std == 0] = 1.0
    a = a + 1e-6 * std * rng.random(a.shape)
    return np.argsort(np.argsort(a, axis=0, kind="stable"), axis=0, kind="stable").astype(np.float64)


def cmi_knn_pvalue(
    x,
    y,
    z=None,
    seed: int = 0,
    k: int = 10,
    k_perm: int = 5,
    n_perm: int = 500,
    backend=None,
) -> TestResult:
    """Conditional independence test ``x _||_ y | z`` via kNN CMI.

    Parameters
    ----------
    x, y : array_like
        Columns of length ``n >= 50``.
    z : array_like, optional
        Conditioning block ``(n, d_z)``; empty or ``None`` gives an
        unconditional permutation MI test.
    seed : int
        Drives the tie-breaking jitter and the permutations.
    k, k_perm, n_perm : int
        Estimator neighbours, permutation neighbourhood size and number of
        null draws.
    """
    x = _as_2d(x, "x")
    y = _as_2d(y, "y")
    n = x.shape[0]
    if y.shape[0] != n:
        raise ValueError("columns differ in length")
    if z is None:
        z = np.zeros((n, 0))
    z = np.asarray(z, dtype=np.float64).reshape(n, -1)
    if not np.all(np.isfinite(z)):
        raise ValueError("z contains non-finite values")
    if n < 50:
        raise ValueError("CMI test needs at least 50 samples")
    if k >= n or k_perm > n:
        raise ValueError("neighbour counts exceed the sample size")
    if n_perm < 1:
        raise ValueError("need at least one permutation")
    be = backend or _kernels.backend
    rng = np.random.default_rng(seed)

    arr = _rank_with_jitter(np.hstack([x, y, z]), rng)
    dx, dy = x.shape[1], y.shape[1]
    xs, ys, zs = arr[:, :dx], arr[:, dx : dx + dy], arr[:, dx + dy :]
    yz = np.hstack([ys, zs])
    zb = zs if zs.shape[1] else None

    if zb is None:
        perms = np.stack([rng.permutation(n) for _ in range(n_perm)])
    else:
        neighbors = cKDTree(zs).query(zs, k=k_perm, p=np.inf)[1].reshape(n, k_perm).astype(np.int64)
        perms = np.empty((n_perm, n), dtype=np.int64)
        for s in range(n_perm):
            order = rng.permutation(n)
            shuffled = np.take_along_axis(neighbors, np.argsort(rng.random(neighbors.shape), axis=1), axis=1)
            perms[s] = be.restricted_permutation(shuffled, order)
    values = be.cmi_batch(xs, yz, zb, np.vstack([np.arange(n)[None, :], perms]), k)
    observed, null = float(values[0]), values[1:]
    # ties count as at least as extreme; the tolerance absorbs summation order
    p = float(np.mean(null >= observed - 1e-9 * max(1.0, abs(observed))))
    return TestResult(
        statistic=observed,
        p_value=p,
        method="cmi-knn",
        params={"k": k, "k_perm": k_perm, "n_perm": n_perm},
        seed=seed,
    )


__all__ = [
    "DegenerateInputError",
    "GramCache",
    "TestResult",
    "cmi_knn_pvalue",
    "hsic_from_grams",
    "hsic_pvalue",
    "hsic_statistic",
    "median_width",
]
