import os
import subprocess
import sys

import numpy as np
import pytest

from camuvx import _kernels
from camuvx.independence import (
    DegenerateInputError,
    GramCache,
    cmi_knn_pvalue,
    hsic_from_grams,
    hsic_pvalue,
    median_width,
)
from camuvx.synth import CausalGraph, ScmSpec, make_scm_spec, sample_dataset

NUMBA = _kernels.get_backend("numba")
NUMPY = _kernels.get_backend("numpy")


def naive_hsic(u, v):
    """trace(K H L H) / n^2 with Gaussian kernels and median bandwidths, by loops."""
    n = len(u)
    wu, wv = median_width(u), median_width(v)
    k = np.array([[np.exp(-((u[a] - u[b]) ** 2) / (2 * wu**2)) for b in range(n)] for a in range(n)])
    l = np.array([[np.exp(-((v[a] - v[b]) ** 2) / (2 * wv**2)) for b in range(n)] for a in range(n)])
    h = np.eye(n) - np.ones((n, n)) / n
    return np.trace(k @ h @ l @ h) / n**2


@pytest.mark.parametrize("backend", [NUMBA, NUMPY], ids=["numba", "numpy"])
def test_hsic_statistic_matches_definition(backend):
    rng = np.random.default_rng(0)
    u, v = rng.standard_normal(10), rng.standard_normal(10)
    got = hsic_from_grams(GramCache.build(u, backend=backend), GramCache.build(v, backend=backend), backend)
    ref = naive_hsic(u, v)
    assert abs(got.statistic - ref) <= 1e-12 * abs(ref)


def test_hsic_identical_columns():
    x = np.random.default_rng(1).standard_normal(200)
    assert hsic_pvalue(x, x).p_value < 0.001


def test_hsic_symmetric_and_shift_invariant():
    rng = np.random.default_rng(2)
    u = rng.standard_normal(150)
    v = u**2 + rng.standard_normal(150)
    a, b = hsic_pvalue(u, v), hsic_pvalue(v, u)
    assert a.statistic == pytest.approx(b.statistic, rel=1e-12)
    assert a.p_value == pytest.approx(b.p_value, rel=1e-9)
    c = hsic_pvalue(u + 7.0, v - 3.0)
    assert c.statistic == pytest.approx(a.statistic, rel=1e-9)
    assert a.statistic > 0


def test_hsic_type_one_error():
    rng = np.random.default_rng(3)
    rejections = sum(
        hsic_pvalue(rng.standard_normal(200), rng.standard_normal(200)).p_value <= 0.05 for _ in range(1000)
    )
    assert 0.02 <= rejections / 1000 <= 0.10


def test_hsic_input_errors():
    with pytest.raises(DegenerateInputError):
        hsic_pvalue(np.ones(30), np.arange(30.0))
    with pytest.raises(ValueError):
        hsic_pvalue(np.arange(10.0), np.arange(10.0))
    with pytest.raises(ValueError):
        hsic_pvalue(np.arange(30.0), np.arange(31.0))
    with pytest.raises(ValueError):
        hsic_pvalue(np.r_[np.arange(29.0), np.inf], np.arange(30.0))


def _triple(kind, seed, n=500):
    if kind == "chain":
        g = CausalGraph.from_edges(["x", "y", "z"], [(0, 1), (1, 2)])
        spec = ScmSpec(g, {(0, 1): (0.5, 0.0, 3), (1, 2): (-0.5, 0.0, 3)}, (1.0, 0.7, 0.7), seed)
    else:
        g = CausalGraph.from_edges(["x", "y", "z"], [(0, 1), (2, 1)])
        spec = make_scm_spec(g, seed)
    return sample_dataset(spec, n).values


@pytest.mark.slow
def test_cmi_chain_retains_null():
    rej = sum(
        cmi_knn_pvalue(d[:, 0], d[:, 2], d[:, [1]], seed=s).p_value <= 0.05
        for s, d in ((s, _triple("chain", s)) for s in range(60))
    )
    assert rej / 60 <= 0.15


@pytest.mark.slow
def test_cmi_collider_has_power():
    rej = sum(
        cmi_knn_pvalue(d[:, 0], d[:, 2], d[:, [1]], seed=s).p_value <= 0.05
        for s, d in ((s, _triple("collider", s)) for s in range(60))
    )
    assert rej / 60 >= 0.80


def test_cmi_detects_identity_without_z():
    x = np.random.default_rng(4).standard_normal(200)
    assert cmi_knn_pvalue(x, x, None, seed=0, n_perm=200).p_value < 0.01


def test_tests_are_deterministic():
    d = _triple("collider", 1, n=200)
    a = cmi_knn_pvalue(d[:, 0], d[:, 2], d[:, [1]], seed=9, n_perm=100)
    b = cmi_knn_pvalue(d[:, 0], d[:, 2], d[:, [1]], seed=9, n_perm=100)
    assert a == b
    assert 0.0 <= a.p_value <= 1.0
    assert a.params == {"k": 10, "k_perm": 5, "n_perm": 100}


def test_cmi_input_errors():
    x = np.arange(60.0)
    with pytest.raises(ValueError):
        cmi_knn_pvalue(x[:40], x[:40], None)
    with pytest.raises(ValueError):
        cmi_knn_pvalue(x, x, None, n_perm=0)
    with pytest.raises(ValueError):
        cmi_knn_pvalue(x, x, None, k=60)


def test_cmi_handles_ties():
    rng = np.random.default_rng(5)
    x = np.round(rng.standard_normal(100))
    z = np.round(rng.standard_normal(100))
    r = cmi_knn_pvalue(x, x + z, z, seed=1, n_perm=50)
    assert np.isfinite(r.statistic)


# -- backends -------------------------------------------------------------------------


def _cases(seed):
    rng = np.random.default_rng(seed)
    for t in range(12):
        n = int(rng.integers(50, 220))
        k = int(rng.integers(1, 12))
        x = rng.standard_normal((n, 1))
        if t % 2:
            x = np.round(x * 2) / 2
        y = rng.standard_normal((n, 1))
        dz = t % 3
        z = rng.standard_normal((n, dz)) if dz else None
        yield n, k, x, y, z


def test_cmi_batch_backends_agree_on_arbitrary_index_maps():
    # local permutations repeat indices, so the kernels must not assume bijections
    for n, k, x, y, z in _cases(6):
        yz = np.hstack([y, z]) if z is not None else y
        rng = np.random.default_rng(n)
        perms = np.vstack([np.arange(n), rng.integers(0, n, (6, n)), [rng.permutation(n) for _ in range(4)]])
        a = NUMBA.cmi_batch(x, yz, z, perms, k)
        b = NUMPY.cmi_batch(x, yz, z, perms, k)
        assert np.allclose(a, b, rtol=0, atol=1e-12)


def test_cmi_batch_multicolumn_x():
    rng = np.random.default_rng(7)
    x, y = rng.standard_normal((80, 2)), rng.standard_normal((80, 1))
    perms = np.vstack([np.arange(80), rng.integers(0, 80, (5, 80))])
    assert np.allclose(NUMBA.cmi_batch(x, y, None, perms, 4), NUMPY.cmi_batch(x, y, None, perms, 4), atol=1e-12)


def test_knn_counts_backends_agree():
    for n, k, x, y, z in _cases(8):
        yz = np.hstack([y, z]) if z is not None else y
        a = NUMBA.knn_counts(x, yz, z, k)
        b = NUMPY.knn_counts(x, yz, z, k)
        for u, v in zip(a, b):
            assert np.array_equal(u, v)


def test_gram_and_permutation_backends_agree():
    rng = np.random.default_rng(9)
    x = rng.standard_normal((120, 1))
    ka, ma = NUMBA.centered_gram(x, 0.7)
    kb, mb = NUMPY.centered_gram(x, 0.7)
    assert np.allclose(ka, kb, atol=1e-12) and ma == pytest.approx(mb)
    nbrs = rng.integers(0, 120, (120, 5))
    order = rng.permutation(120)
    assert np.array_equal(NUMBA.restricted_permutation(nbrs, order), NUMPY.restricted_permutation(nbrs, order))


def test_p_values_agree_across_backends():
    d = _triple("collider", 3, n=150)
    for z in (d[:, [1]], None):
        a = cmi_knn_pvalue(d[:, 0], d[:, 2], z, seed=2, n_perm=100, backend=NUMBA)
        b = cmi_knn_pvalue(d[:, 0], d[:, 2], z, seed=2, n_perm=100, backend=NUMPY)
        assert a.p_value == b.p_value
    u, v = d[:, 0], d[:, 1]
    assert hsic_pvalue(u, v, NUMBA).p_value == pytest.approx(hsic_pvalue(u, v, NUMPY).p_value, rel=1e-9)


def test_env_flag_selects_numpy_backend():
    code = "from camuvx import _kernels; print(_kernels.backend.name)"
    env = dict(os.environ, CAMUVX_DISABLE_NUMBA="1")
    out = subprocess.run([sys.executable, "-c", code], env=env, capture_output=True, text=True, check=True)
    assert out.stdout.strip() == "numpy"
    env.pop("CAMUVX_DISABLE_NUMBA")
    out = subprocess.run([sys.executable, "-c", code], env=env, capture_output=True, text=True, check=True)
    assert out.stdout.strip() == "numba"
