"""Time the numba kernels against the numpy fallback on the two test workloads.

    python3 benchmarks/bench_kernels.py --n 500 --repeats 3

The numba timings exclude compilation (one warm-up call per kernel). The
same comparison runs through the public API when the package is imported
with ``CAMUVX_DISABLE_NUMBA=1``.
"""
from __future__ import annotations

import argparse
import time

import numpy as np

from camuvx._kernels import get_backend
from camuvx.independence import GramCache, cmi_knn_pvalue, hsic_from_grams


def best_of(fn, repeats: int) -> tuple[float, object]:
    best, out = np.inf, None
    for _ in range(repeats):
        t = time.perf_counter()
        out = fn()
        best = min(best, time.perf_counter() - t)
    return best, out


def workloads(n: int, n_perm: int, seed: int):
    rng = np.random.default_rng(seed)
    x = rng.standard_normal(n)
    y = np.tanh(x) + 0.5 * rng.standard_normal(n)
    z = x + rng.standard_normal(n)

    def hsic(be):
        return hsic_from_grams(GramCache.build(x, backend=be), GramCache.build(y, backend=be), be).p_value

    def cmi_z(be):
        return cmi_knn_pvalue(x, y, z, seed=seed, n_perm=n_perm, backend=be).p_value

    def cmi_plain(be):
        return cmi_knn_pvalue(x, y, None, seed=seed, n_perm=n_perm, backend=be).p_value

    return {"hsic (gram + gamma)": hsic, "cmi-knn | z": cmi_z, "cmi-knn, no z": cmi_plain}


def main(argv=None) -> int:
    ap = argparse.ArgumentParser(description=__doc__, formatter_class=argparse.RawDescriptionHelpFormatter)
    ap.add_argument("--n", type=int, default=500)
    ap.add_argument("--n-perm", type=int, default=500)
    ap.add_argument("--repeats", type=int, default=3)
    ap.add_argument("--seed", type=int, default=0)
    args = ap.parse_args(argv)

    nb, npy = get_backend("numba"), get_backend("numpy")
    print(f"n={args.n} n_perm={args.n_perm} best of {args.repeats}")
    print(f"{'workload':22s} {'numba s':>9s} {'numpy s':>9s} {'speedup':>8s}  agree")
    for name, fn in workloads(args.n, args.n_perm, args.seed).items():
        fn(nb)  # compile
        t_nb, p_nb = best_of(lambda: fn(nb), args.repeats)
        t_np, p_np = best_of(lambda: fn(npy), args.repeats)
        agree = abs(p_nb - p_np) <= 1e-9
        print(f"{name:22s} {t_nb:9.4f} {t_np:9.4f} {t_np / t_nb:8.2f}  {agree}")
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
