import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from mixemu.campaign import Preprocessor
from mixemu.errors import CapacityError, InvalidArgument, RankDeficient
from mixemu.linear import (KernelRidgeModel, LinearConfig, LinearModel, fit_kernel_ridge,
                           fit_linear, fit_logistic, fit_polynomial, logistic_loss_grad, objective,
                           predict, rbf_kernel)
from mixemu.metrics import r2_score


def test_exact_fit():
    m = fit_linear([[1.0], [2.0]], [1.0, 2.0])
    assert m.weights[0] == pytest.approx(1.0, abs=1e-10)
    assert m.intercept == pytest.approx(0.0, abs=1e-10)
    assert m.family == "lsqr"


def test_ridge_closed_form(rng):
    X = rng.normal(size=(50, 5))
    y = rng.normal(size=50)
    for a2 in (0.1, 1.0, 10.0):
        m = fit_linear(X, y, LinearConfig(alpha2=a2, fit_intercept=False))
        w = np.linalg.solve(X.T @ X + a2 * np.eye(5), X.T @ y)
        np.testing.assert_allclose(m.weights, w, atol=1e-8)


def test_ridge_with_intercept_matches_centered_closed_form(rng):
    X = rng.normal(size=(50, 5)) + 3
    y = rng.normal(size=50) + 1
    m = fit_linear(X, y, LinearConfig(alpha2=2.0))
    Xc, yc = X - X.mean(0), y - y.mean()
    w = np.linalg.solve(Xc.T @ Xc + 2.0 * np.eye(5), Xc.T @ yc)
    np.testing.assert_allclose(m.weights, w, atol=1e-8)
    assert m.intercept == pytest.approx(y.mean() - X.mean(0) @ w, abs=1e-8)


def test_rank_deficient():
    X = np.array([[1.0, 2.0], [2.0, 4.0], [3.0, 6.0]])
    with pytest.raises(RankDeficient):
        fit_linear(X, [1.0, 2.0, 3.0])
    # a penalty makes it solvable
    fit_linear(X, [1.0, 2.0, 3.0], LinearConfig(alpha2=1e-3))


def test_lasso_large_penalty_zero(rng):
    X = rng.normal(size=(40, 4))
    y = X @ [1.0, -1.0, 2.0, 0.5]
    m = fit_linear(X, y, LinearConfig(alpha1=1e4))
    assert np.all(m.weights == 0.0)
    assert m.family == "lasso"


def test_lasso_kkt(rng):
    X = rng.normal(size=(60, 5))
    y = X @ [2.0, 0.0, -1.0, 0.0, 0.3] + 0.1 * rng.normal(size=60)
    a1 = 5.0
    m = fit_linear(X, y, LinearConfig(alpha1=a1, tol=1e-12, max_iter=100000, fit_intercept=False))
    g = 2 * X.T @ (X @ m.weights - y)
    nz = m.weights != 0
    np.testing.assert_allclose(g[nz], -a1 * np.sign(m.weights[nz]), atol=1e-6)
    assert np.all(np.abs(g[~nz]) <= a1 + 1e-6)


def test_lasso_sparsity_monotone(rng):
    X = rng.normal(size=(80, 8))
    y = X @ rng.normal(size=8) + 0.2 * rng.normal(size=80)
    counts = [np.count_nonzero(fit_linear(X, y, LinearConfig(alpha1=a, tol=1e-10)).weights)
              for a in np.geomspace(0.01, 500, 15)]
    assert all(b <= a for a, b in zip(counts, counts[1:]))


def test_ridge_norm_monotone(rng):
    X = rng.normal(size=(30, 6))
    y = rng.normal(size=30)
    norms = [np.linalg.norm(fit_linear(X, y, LinearConfig(alpha2=a)).weights)
             for a in np.geomspace(1e-3, 1e3, 20)]
    assert all(b <= a + 1e-12 for a, b in zip(norms, norms[1:]))


def test_enet_config():
    cfg = LinearConfig.elastic_net(0.2, 0.25)
    assert cfg.alpha1 == pytest.approx(0.05) and cfg.alpha2 == pytest.approx(0.15)


def test_huber_equals_least_squares_without_outliers(rng):
    X = rng.normal(size=(100, 3))
    y = X @ [1.0, 2.0, -1.0] + 0.01 * rng.uniform(-1, 1, 100)
    h = fit_linear(X, y, LinearConfig(loss="huber", epsilon=100.0, tol=1e-12, max_iter=200))
    ls = fit_linear(X, y)
    np.testing.assert_allclose(h.weights, ls.weights, atol=1e-8)
    assert h.converged


def test_huber_resists_outliers(rng):
    X = rng.normal(size=(200, 1))
    y = 3 * X[:, 0] + 0.05 * rng.normal(size=200)
    y[:10] += 50
    h = fit_linear(X, y, LinearConfig(loss="huber", max_iter=200, tol=1e-10))
    ls = fit_linear(X, y)
    assert abs(h.weights[0] - 3) < 0.05 < abs(ls.weights[0] - 3) or abs(h.intercept) < abs(ls.intercept)
    assert h.scale > 0


def test_objective_reported(rng):
    X = rng.normal(size=(20, 2))
    y = rng.normal(size=20)
    cfg = LinearConfig(alpha2=0.5)
    m = fit_linear(X, y, cfg)
    assert m.objective == pytest.approx(objective(X, y, m.weights, m.intercept, cfg))


def test_standardization_commutes(rng):
    X = rng.normal(size=(40, 3)) * [1, 10, 100] + [0, 5, -7]
    y = rng.normal(size=40)
    raw = fit_linear(X, y)
    pre = Preprocessor("standardize")
    std = fit_linear(pre.fit_transform(X), y)
    w = std.weights / pre.stats["scale"]
    w0 = std.intercept - pre.stats["mean"] @ w
    np.testing.assert_allclose(X @ w + w0, raw.predict(X), atol=1e-8)


def test_zero_model_predicts_intercept():
    m = LinearModel(np.zeros(3), 1.5)
    np.testing.assert_array_equal(predict(m, np.ones((4, 3))), 1.5)
    with pytest.raises(InvalidArgument):
        m.predict(np.ones((4, 2)))


def test_config_validation():
    with pytest.raises(InvalidArgument):
        LinearConfig(alpha1=-1)
    with pytest.raises(InvalidArgument):
        LinearConfig(loss="huber", epsilon=0)
    with pytest.raises(InvalidArgument):
        LinearConfig(max_iter=0)
    with pytest.raises(InvalidArgument):
        fit_linear([[1.0]], [1.0])


# --- polynomial ---------------------------------------------------------------

def test_polynomial_fits_quadratic(rng):
    x = rng.uniform(-2, 2, (100, 1))
    y = x[:, 0] ** 2
    xt = rng.uniform(-2, 2, (50, 1))
    m = fit_polynomial(x, y)
    assert r2_score(xt[:, 0] ** 2, m.predict(xt)) >= 0.999
    assert r2_score(y, fit_linear(x, y).predict(x)) < r2_score(y, m.predict(x))


def test_polynomial_on_linear_data(rng):
    x = rng.uniform(-2, 2, (60, 1))
    m = fit_polynomial(x, 2 * x[:, 0] + 1)
    assert abs(m.linear.weights[1]) < 1e-6


# --- logistic -------------------------------------------------------------------

def test_logistic_separable(rng):
    X = np.vstack([rng.normal(size=(30, 2)) - 3, rng.normal(size=(30, 2)) + 3])
    y = np.repeat([1, 2], 30)
    m = fit_logistic(X, y)
    assert np.mean(m.predict(X) == y) == 1.0


def test_logistic_midpoint():
    m = fit_logistic(np.array([[-1.0], [1.0]]), np.array([0, 1]),
                     LinearConfig(alpha2=0.1, tol=1e-14, max_iter=1000))
    assert m.predict_proba(np.array([[0.0]]))[0, 0] == pytest.approx(0.5, abs=1e-6)


def test_logistic_gradient_fd(rng):
    X = rng.normal(size=(25, 3))
    Y = np.eye(4)[rng.integers(0, 4, 25)]
    theta = rng.normal(size=3 * 4 + 4)
    _, g = logistic_loss_grad(theta, X, Y, 0.3)
    h = 1e-6
    fd = np.array([(logistic_loss_grad(theta + h * e, X, Y, 0.3)[0]
                    - logistic_loss_grad(theta - h * e, X, Y, 0.3)[0]) / (2 * h)
                   for e in np.eye(theta.size)])
    assert np.linalg.norm(fd - g) / np.linalg.norm(g) < 1e-5


@settings(max_examples=30, deadline=None)
@given(st.integers(0, 10**6))
def test_logistic_probabilities_sum_to_one(seed):
    rng = np.random.default_rng(seed)
    X = rng.normal(size=(30, 2))
    y = rng.integers(1, 4, 30)
    if np.unique(y).size < 2:
        y[0], y[1] = 1, 2
    m = fit_logistic(X, y, LinearConfig(max_iter=50))
    P = m.predict_proba(rng.normal(size=(10, 2)) * 100)
    np.testing.assert_allclose(P.sum(1), 1.0, atol=1e-10)


def test_logistic_single_class():
    with pytest.raises(InvalidArgument):
        fit_logistic(np.ones((4, 2)), np.ones(4))


# --- kernel ridge -------------------------------------------------------------

def test_kernel_ridge_single_point():
    m = fit_kernel_ridge(np.array([[0.3, 0.2]]), np.array([2.5]), alpha=0.0)
    assert m.predict(np.array([[0.3, 0.2]]))[0] == pytest.approx(2.5, abs=1e-10)


def test_kernel_ridge_large_alpha(rng):
    X = rng.normal(size=(10, 2))
    m = fit_kernel_ridge(X, rng.normal(size=10), alpha=1e12)
    assert np.max(np.abs(m.predict(X))) < 1e-10


def test_kernel_ridge_dense_oracle(rng):
    X = rng.normal(size=(10, 3))
    y = rng.normal(size=10)
    m = fit_kernel_ridge(X, y, alpha=1e-6, lam=0.7)
    K = np.exp(-0.7 * ((X[:, None, :] - X[None, :, :]) ** 2).sum(-1))
    coef = np.linalg.solve(K + 1e-6 * np.eye(10), y)
    Xs = rng.normal(size=(5, 3))
    Ks = np.exp(-0.7 * ((Xs[:, None, :] - X[None, :, :]) ** 2).sum(-1))
    np.testing.assert_allclose(m.dual_coef, coef, rtol=1e-8, atol=1e-8)
    np.testing.assert_allclose(m.predict(Xs), Ks @ coef, atol=1e-8)
    assert isinstance(m, KernelRidgeModel) and m.dual_coef.size == 10


def test_kernel_ridge_capacity(rng):
    with pytest.raises(CapacityError):
        fit_kernel_ridge(rng.normal(size=(30, 2)), rng.normal(size=30), max_rows=20)


def test_rbf_kernel_unit_diagonal(rng):
    X = rng.normal(size=(6, 2))
    np.testing.assert_allclose(np.diag(rbf_kernel(X, X, 2.0)), 1.0)
