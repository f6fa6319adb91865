import numpy as np
import pytest

from camuvx.fixtures import load_fixture
from camuvx.gam import N_BASIS, _basis, fit_additive, fit_residual, residual
from camuvx.independence import hsic_pvalue
from camuvx.synth import make_scm_spec, sample_dataset


def test_intercept_only_fit():
    y = np.array([1.0, 2.0, 6.0])
    fit = fit_additive(y)
    assert fit.intercept == pytest.approx(3.0)
    assert np.allclose(residual(fit, y), y - 3.0)


def test_recovers_square():
    rng = np.random.default_rng(0)
    x = rng.uniform(-2, 2, 500)
    y = x**2 + 0.1 * rng.standard_normal(500)
    fit = fit_additive(y, x)
    grid = np.linspace(-2, 2, 201)
    rmse = np.sqrt(np.mean((fit.predict(grid) - grid**2) ** 2))
    assert rmse <= 0.1


def test_linear_slope_matches_ols():
    rng = np.random.default_rng(1)
    x = rng.standard_normal(500)
    y = 2 * x + 0.3 * rng.standard_normal(500)
    fit = fit_additive(y, x)
    ols = np.polyfit(x, y, 1)[0]
    lo, hi = np.quantile(x, [0.1, 0.9])
    slope = (fit.component(0, np.array([hi])) - fit.component(0, np.array([lo])))[0] / (hi - lo)
    assert abs(slope - ols) <= 0.05


def test_prediction_is_additive():
    rng = np.random.default_rng(2)
    x = rng.standard_normal((300, 3))
    y = np.sin(x[:, 0]) + x[:, 1] ** 2 - x[:, 2] + 0.2 * rng.standard_normal(300)
    fit = fit_additive(y, x)
    probe = rng.standard_normal((50, 3))
    parts = fit.intercept + sum(fit.component(m, probe[:, m]) for m in range(3))
    assert np.allclose(fit.predict(probe), parts)
    # moving one coordinate shifts the prediction by that component alone
    moved = probe.copy()
    moved[:, 1] += 0.5
    delta = fit.predict(moved) - fit.predict(probe)
    assert np.allclose(delta, fit.component(1, moved[:, 1]) - fit.component(1, probe[:, 1]))


def test_residual_orthogonal_to_penalised_basis():
    rng = np.random.default_rng(3)
    x = rng.standard_normal((400, 2))
    y = np.tanh(x[:, 0]) + x[:, 1] + 0.3 * rng.standard_normal(400)
    fit = fit_additive(y, x)
    r = residual(fit, y, x)
    assert abs(r.mean()) <= 1e-9
    # the normal equations leave B'r equal to the penalty pull; with the
    # smallest lambda on the grid it is tiny relative to B'y
    small = fit_additive(y, x, lambdas=[1e-9])
    rs = residual(small, y, x)
    for m in range(2):
        b = _basis(x[:, m], small.knots[m]) - small.col_means[m]
        assert np.linalg.norm(b.T @ rs) <= 1e-6 * np.linalg.norm(b.T @ (y - y.mean()))
    assert np.isfinite(r).all()


def test_fit_is_deterministic():
    rng = np.random.default_rng(4)
    x = rng.standard_normal((200, 2))
    y = x[:, 0] ** 3 + rng.standard_normal(200)
    assert np.array_equal(fit_residual(y, x), fit_residual(y, x))


def test_input_errors():
    with pytest.raises(ValueError):
        fit_additive(np.array([1.0, np.nan]))
    with pytest.raises(ValueError):
        fit_additive(np.ones(10), np.ones(10))
    with pytest.raises(ValueError):
        fit_additive(np.ones(30), np.ones(29))
    fit = fit_additive(np.arange(30.0), np.arange(30.0))
    with pytest.raises(ValueError):
        residual(fit, np.arange(30.0), np.ones((30, 2)))


def test_constant_predictor_does_not_crash():
    rng = np.random.default_rng(5)
    y = rng.standard_normal(50)
    r = fit_residual(y, np.ones((50, 1)))
    assert np.allclose(r, y - y.mean(), atol=1e-6)
    assert len(fit_additive(y, rng.standard_normal((50, 1))).coefs[0]) == N_BASIS


@pytest.mark.xfail(reason="finite-sample leakage of the hidden confounder; see the decisions ledger", strict=False)
def test_fig1a_residual_independence_rate():
    g = load_fixture("fig1a")
    passes = 0
    for s in range(100):
        x = sample_dataset(make_scm_spec(g, s), 500).values
        r2 = fit_residual(x[:, 1], x[:, [0, 2]])
        passes += hsic_pvalue(r2, x[:, 0] - x[:, 0].mean()).p_value > 0.1
    assert passes >= 80
