"""Hot loops behind the independence tests, in numba and plain-numpy flavours.

Set ``CAMUVX_DISABLE_NUMBA=1`` before import to force the numpy path. Both
flavours expose the same functions:

``centered_gram(x, width)``
    Gaussian Gram matrix of the rows of ``x`` (n, d), doubly centred, together
    with the mean of its off-diagonal entries.
``hsic_sums(kc, lc)``
    ``(sum(kc * lc), sum over i != j of (kc * lc) ** 2)``.
``knn_counts(x, yz, z, k)``
    Max-norm k-th neighbour radius in the joint space and the strict-radius
    neighbour counts in the ``xz``, ``yz`` and ``z`` subspaces (self included).
``cmi_batch(x, yz, z, perms, k)``
    kNN CMI estimate for ``x[perm]`` against ``(y, z)`` for every row of
    ``perms``.
``restricted_permutation(neighbors, order)``
    Greedy permutation drawing each sample from its own ``z``-neighbourhood
    while avoiding indices already used, when possible.
"""
from __future__ import annotations

import os
from types import SimpleNamespace

import numpy as np
from scipy.spatial import cKDTree
from scipy.special import digamma

_FLAG = "CAMUVX_DISABLE_NUMBA"


def _numba_wanted() -> bool:
    return os.environ.get(_FLAG, "").strip().lower() not in ("1", "true", "yes", "on")


# -- numpy ------------------------------------------------------------------------


def _np_centered_gram(x: np.ndarray, width: float) -> tuple[np.ndarray, float]:
    x = np.asarray(x, dtype=np.float64)
    if x.ndim == 1:
        x = x[:, None]
    n = x.shape[0]
    d2 = np.zeros((n, n))
    for c in range(x.shape[1]):
        d2 += (x[:, c][:, None] - x[:, c][None, :]) ** 2
    k = np.exp(-d2 / (2.0 * width * width))
    mu = (k.sum() - np.trace(k)) / (n * (n - 1))
    row = k.mean(axis=0)
    kc = k - row[None, :] - row[:, None] + row.mean()
    return kc, float(mu)


def _np_hsic_sums(kc: np.ndarray, lc: np.ndarray) -> tuple[float, float]:
    prod = kc * lc
    s1 = prod.sum()
    s2 = (prod * prod).sum() - np.sum(np.diag(prod) ** 2)
    return float(s1), float(s2)


def _strict(r: np.ndarray) -> np.ndarray:
    # cKDTree counts dist <= r; stepping one ulp down gives dist < eps exactly
    return np.nextafter(r, 0.0)


def _np_knn_counts(x, yz, z, k):
    x = np.asarray(x, dtype=np.float64).reshape(len(x), -1)
    yz = np.asarray(yz, dtype=np.float64).reshape(len(x), -1)
    n = x.shape[0]
    joint = np.hstack([x, yz])
    eps = cKDTree(joint).query(joint, k=[k + 1], p=np.inf)[0][:, 0]
    r = _strict(eps)
    if z is None or z.shape[1] == 0:
        kxz = cKDTree(x).query_ball_point(x, r=r, p=np.inf, return_length=True)
        kyz = cKDTree(yz).query_ball_point(yz, r=r, p=np.inf, return_length=True)
        kz = np.full(n, n, dtype=np.int64)
    else:
        xz = np.hstack([x, z])
        kxz = cKDTree(xz).query_ball_point(xz, r=r, p=np.inf, return_length=True)
        kyz = cKDTree(yz).query_ball_point(yz, r=r, p=np.inf, return_length=True)
        kz = cKDTree(z).query_ball_point(z, r=r, p=np.inf, return_length=True)
    return eps, np.asarray(kxz, np.int64), np.asarray(kyz, np.int64), np.asarray(kz, np.int64)


def _np_cmi_batch(x, yz, z, perms, k):
    x = np.asarray(x, dtype=np.float64).reshape(len(x), -1)
    psi = digamma_table(x.shape[0])
    out = np.empty(len(perms))
    for r, perm in enumerate(perms):
        _, kxz, kyz, kz = _np_knn_counts(x[perm], yz, z, k)
        out[r] = psi[k] - np.mean(psi[kxz] + psi[kyz] - psi[kz])
    return out


def _np_restricted_permutation(neighbors, order):
    n, kp = neighbors.shape
    perm = np.empty(n, dtype=np.int64)
    used = np.zeros(n, dtype=bool)
    for i in order:
        m = 0
        use = neighbors[i, 0]
        while used[use] and m < kp - 1:
            m += 1
            use = neighbors[i, m]
        perm[i] = use
        used[use] = True
    return perm


def digamma_table(n: int) -> np.ndarray:
    """``psi(0..n)`` with ``psi(0)`` set to zero (never indexed)."""
    t = digamma(np.arange(n + 1, dtype=np.float64))
    t[0] = 0.0
    return t


numpy_impl = SimpleNamespace(
    name="numpy",
    centered_gram=_np_centered_gram,
    hsic_sums=_np_hsic_sums,
    knn_counts=_np_knn_counts,
    cmi_batch=_np_cmi_batch,
    restricted_permutation=_np_restricted_permutation,
)


# -- numba ------------------------------------------------------------------------


def _build_numba():
    from numba import njit

    @njit(cache=True)
    def _gram(x, width):
        n, d = x.shape
        k = np.empty((n, n))
        scale = 1.0 / (2.0 * width * width)
        for i in range(n):
            k[i, i] = 1.0
            for j in range(i + 1, n):
                s = 0.0
                for c in range(d):
                    t = x[i, c] - x[j, c]
                    s += t * t
                v = np.exp(-s * scale)
                k[i, j] = v
                k[j, i] = v
        row = np.zeros(n)
        off = 0.0
        for i in range(n):
            acc = 0.0
            for j in range(n):
                acc += k[i, j]
            row[i] = acc / n
            off += acc - 1.0
        grand = row.mean()
        for i in range(n):
            for j in range(n):
                k[i, j] = k[i, j] - row[i] - row[j] + grand
        return k, off / (n * (n - 1))

    @njit(cache=True)
    def _sums(kc, lc):
        n = kc.shape[0]
        s1 = 0.0
        s2 = 0.0
        for i in range(n):
            for j in range(n):
                p = kc[i, j] * lc[i, j]
                s1 += p
                if i != j:
                    s2 += p * p
        return s1, s2

    @njit(cache=True)
    def _cheb(a, i, j):
        m = 0.0
        for c in range(a.shape[1]):
            t = abs(a[i, c] - a[j, c])
            if t > m:
                m = t
        return m

    @njit(cache=True)
    def _counts(x, yz, z, k):
        n = x.shape[0]
        eps = np.empty(n)
        kxz = np.empty(n, np.int64)
        kyz = np.empty(n, np.int64)
        kz = np.empty(n, np.int64)
        has_z = z.shape[1] > 0
        buf = np.empty(k + 1)
        for i in range(n):
            # k+1 smallest joint distances, self (0.0) included
            filled = 0
            for j in range(n):
                dx = _cheb(x, i, j)
                dyz = _cheb(yz, i, j)
                dj = dx if dx > dyz else dyz
                if filled < k + 1:
                    p = filled
                    while p > 0 and buf[p - 1] > dj:
                        buf[p] = buf[p - 1]
                        p -= 1
                    buf[p] = dj
                    filled += 1
                elif dj < buf[k]:
                    p = k
                    while p > 0 and buf[p - 1] > dj:
                        buf[p] = buf[p - 1]
                        p -= 1
                    buf[p] = dj
            e = buf[k]
            eps[i] = e
            cxz = 0
            cyz = 0
            cz = 0
            for j in range(n):
                dx = _cheb(x, i, j)
                dyz = _cheb(yz, i, j)
                if dyz < e:
                    cyz += 1
                if has_z:
                    dz = _cheb(z, i, j)
                    if dz < e:
                        cz += 1
                        if dx < e:
                            cxz += 1
                elif dx < e:
                    cxz += 1
            kxz[i] = cxz
            kyz[i] = cyz
            kz[i] = cz if has_z else n
        return eps, kxz, kyz, kz

    @njit(cache=True)
    def _cheb_matrix(a):
        n = a.shape[0]
        out = np.zeros((n, n))
        for i in range(n):
            for j in range(i + 1, n):
                v = _cheb(a, i, j)
                out[i, j] = v
                out[j, i] = v
        return out

    @njit(cache=True)
    def _batch(x, dyz, dz, has_z, perms, k, psi):
        n = x.shape[0]
        out = np.empty(perms.shape[0])
        buf = np.empty(k + 1)
        xp = np.empty_like(x)
        for r in range(perms.shape[0]):
            for i in range(n):
                xp[i] = x[perms[r, i]]
            total = 0.0
            for i in range(n):
                filled = 0
                for j in range(n):
                    dx = _cheb(xp, i, j)
                    d = dyz[i, j]
                    dj = dx if dx > d else d
                    if filled <= k or dj < buf[k]:
                        p = filled if filled <= k else k
                        while p > 0 and buf[p - 1] > dj:
                            buf[p] = buf[p - 1]
                            p -= 1
                        buf[p] = dj
                        if filled <= k:
                            filled += 1
                e = buf[k]
                cxz = 0
                cyz = 0
                cz = 0
                for j in range(n):
                    if dyz[i, j] < e:
                        cyz += 1
                    if has_z:
                        if dz[i, j] < e:
                            cz += 1
                            if _cheb(xp, i, j) < e:
                                cxz += 1
                    elif _cheb(xp, i, j) < e:
                        cxz += 1
                if not has_z:
                    cz = n
                total += psi[cxz] + psi[cyz] - psi[cz]
            out[r] = psi[k] - total / n
        return out

    @njit(cache=True)
    def _count_below(row, e):
        # entries of a sorted row strictly below e
        lo, hi = 0, row.shape[0]
        while lo < hi:
            mid = (lo + hi) // 2
            if row[mid] < e:
                lo = mid + 1
            else:
                hi = mid
        return lo

    @njit(cache=True)
    def _batch_1d(x, dyz, dyz_sorted, dz, dz_sorted, has_z, perms, k, psi):
        # same result as _batch for one-column x: the joint k-th neighbour is
        # found by walking outwards in x order until |dx| exceeds the radius
        n = x.shape[0]
        out = np.empty(perms.shape[0])
        buf = np.empty(k + 1)
        xp = np.empty(n)
        rank = np.empty(n, np.int64)
        for r in range(perms.shape[0]):
            # local permutations repeat values, so sort the permuted column itself
            for i in range(n):
                xp[i] = x[perms[r, i]]
            at = np.argsort(xp, kind="mergesort")
            xs = xp[at]
            for q in range(n):
                rank[at[q]] = q
            total = 0.0
            for i in range(n):
                v = xp[i]
                pos = rank[i]
                buf[0] = 0.0
                filled = 1
                lo = pos - 1
                hi = pos + 1
                while True:
                    dl = v - xs[lo] if lo >= 0 else np.inf
                    dh = xs[hi] - v if hi < n else np.inf
                    if dl <= dh:
                        dxv, j = dl, lo
                    else:
                        dxv, j = dh, hi
                    if j < 0 or j >= n or (filled > k and dxv >= buf[k]):
                        break
                    if dl <= dh:
                        lo -= 1
                    else:
                        hi += 1
                    jj = at[j]
                    dxv = abs(v - xp[jj])
                    d = dyz[i, jj]
                    dj = dxv if dxv > d else d
                    if filled <= k or dj < buf[k]:
                        p = filled if filled <= k else k
                        while p > 0 and buf[p - 1] > dj:
                            buf[p] = buf[p - 1]
                            p -= 1
                        buf[p] = dj
                        if filled <= k:
                            filled += 1
                e = buf[k]
                cxz = 0
                for step in (-1, 1):
                    q = pos if step == -1 else pos + 1
                    while 0 <= q < n:
                        jj = at[q]
                        if abs(v - xp[jj]) >= e:
                            break
                        if not has_z or dz[i, jj] < e:
                            cxz += 1
                        q += step
                cyz = _count_below(dyz_sorted[i], e)
                cz = _count_below(dz_sorted[i], e) if has_z else n
                total += psi[cxz] + psi[cyz] - psi[cz]
            out[r] = psi[k] - total / n
        return out

    @njit(cache=True)
    def _restricted(neighbors, order):
        n, kp = neighbors.shape
        perm = np.empty(n, np.int64)
        used = np.zeros(n, np.bool_)
        for i in order:
            m = 0
            use = neighbors[i, 0]
            while used[use] and m < kp - 1:
                m += 1
                use = neighbors[i, m]
            perm[i] = use
            used[use] = True
        return perm

    def cmi_batch(x, yz, z, perms, k):
        n = len(x)
        x = np.ascontiguousarray(np.reshape(x, (n, -1)), dtype=np.float64)
        yz = np.ascontiguousarray(np.reshape(yz, (n, -1)), dtype=np.float64)
        has_z = z is not None and z.shape[1] > 0
        dz = _cheb_matrix(np.ascontiguousarray(z, dtype=np.float64)) if has_z else np.zeros((1, 1))
        perms = np.ascontiguousarray(np.atleast_2d(perms), dtype=np.int64)
        dyz = _cheb_matrix(yz)
        psi = digamma_table(n)
        if x.shape[1] == 1:
            dz_sorted = np.sort(dz, axis=1) if has_z else dz
            return _batch_1d(x[:, 0].copy(), dyz, np.sort(dyz, axis=1), dz, dz_sorted, has_z, perms, int(k), psi)
        return _batch(x, dyz, dz, has_z, perms, int(k), psi)

    def restricted_permutation(neighbors, order):
        return _restricted(np.ascontiguousarray(neighbors, dtype=np.int64), np.asarray(order, dtype=np.int64))

    def centered_gram(x, width):
        x = np.ascontiguousarray(x, dtype=np.float64)
        if x.ndim == 1:
            x = x[:, None]
        kc, mu = _gram(x, float(width))
        return kc, float(mu)

    def hsic_sums(kc, lc):
        s1, s2 = _sums(np.ascontiguousarray(kc), np.ascontiguousarray(lc))
        return float(s1), float(s2)

    def knn_counts(x, yz, z, k):
        n = len(x)
        x = np.ascontiguousarray(np.reshape(x, (n, -1)), dtype=np.float64)
        yz = np.ascontiguousarray(np.reshape(yz, (n, -1)), dtype=np.float64)
        z = np.zeros((n, 0)) if z is None else np.ascontiguousarray(z, dtype=np.float64)
        return _counts(x, yz, z, int(k))

    return SimpleNamespace(
        name="numba",
        centered_gram=centered_gram,
        hsic_sums=hsic_sums,
        knn_counts=knn_counts,
        cmi_batch=cmi_batch,
        restricted_permutation=restricted_permutation,
    )


try:
    numba_impl = _build_numba()
except ImportError:  # pragma: no cover - numba is a declared dependency
    numba_impl = None

backend = numba_impl if (numba_impl is not None and _numba_wanted()) else numpy_impl


def get_backend(name: str | None = None) -> SimpleNamespace:
    """Return the active backend, or a named one (``"numba"`` / ``"numpy"``)."""
    if name is None:
        return backend
    if name == "numpy":
        return numpy_impl
    if name == "numba":
        if numba_impl is None:
            raise RuntimeError("numba is not importable in this environment")
        return numba_impl
    raise ValueError(f"unknown backend {name!r}")
