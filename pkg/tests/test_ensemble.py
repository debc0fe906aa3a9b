import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from mixemu.ensemble import (EnsembleModel, fit_adaboost_r2, fit_bagging, fit_gbm,
                             fit_random_forest, predict_ensemble, weighted_median)
from mixemu.errors import InvalidArgument
from mixemu.trees import TreeConfig, fit_tree


def _data(rng, n=80, p=3, noise=0.3):
    X = rng.uniform(-1, 1, (n, p))
    y = np.sin(3 * X[:, 0]) + X[:, 1] ** 2 + noise * rng.normal(size=n)
    return X, y


def test_bagging_single_member_without_bootstrap_is_tree(rng):
    X, y = _data(rng)
    probe = rng.uniform(-1, 1, (30, 3))
    m = fit_bagging(X, y, M=1, bootstrap=False)
    np.testing.assert_array_equal(m.predict(probe), fit_tree(X, y).predict(probe))


def test_bagging_mean_of_members(rng):
    X, y = _data(rng)
    m = fit_bagging(X, y, M=15, seed=3)
    probe = rng.uniform(-1, 1, (30, 3))
    np.testing.assert_allclose(m.predict(probe), m.member_predictions(probe).mean(0), atol=1e-12)


def test_bagging_reduces_seed_variance():
    rng = np.random.default_rng(0)
    X, y = _data(rng, n=120, noise=0.5)
    Xt, yt = _data(rng, n=200, noise=0.0)
    mse = {M: [np.mean((fit_bagging(X, y, M=M, seed=s).predict(Xt) - yt) ** 2) for s in range(10)]
           for M in (1, 100)}
    assert np.var(mse[100]) < np.var(mse[1])


def test_rf_degenerate_is_tree(rng):
    X, y = _data(rng)
    probe = rng.uniform(-1, 1, (30, 3))
    m = fit_random_forest(X, y, M=1, cfg=TreeConfig(max_features=3))
    np.testing.assert_array_equal(m.predict(probe), fit_tree(X, y).predict(probe))


def test_rf_vote_fractions(rng):
    X = rng.normal(size=(100, 3))
    y = np.digitize(X[:, 0] + 0.3 * X[:, 1], [-0.5, 0.5]) + 1
    m = fit_random_forest(X, y, M=25, cfg=TreeConfig(max_features=2, task="classification"))
    P = m.vote_fractions(rng.normal(size=(40, 3)))
    np.testing.assert_allclose(P.sum(1), 1.0)
    assert m.task == "classification"
    assert set(np.unique(m.predict(X))) <= {1, 2, 3}


def test_rf_row_order_invariance(rng):
    X, y = _data(rng)
    perm = rng.permutation(X.shape[0])
    probe = rng.uniform(-1, 1, (30, 3))
    for bootstrap in (False, True):
        a = fit_random_forest(X, y, M=10, cfg=TreeConfig(max_features=2), seed=5, bootstrap=bootstrap)
        b = fit_random_forest(X[perm], y[perm], M=10, cfg=TreeConfig(max_features=2), seed=5,
                              bootstrap=bootstrap)
        np.testing.assert_array_equal(a.predict(probe), b.predict(probe))


def test_member_order_and_thread_invariance(rng):
    X, y = _data(rng)
    probe = rng.uniform(-1, 1, (30, 3))
    a = fit_random_forest(X, y, M=12, cfg=TreeConfig(max_features=2), seed=1)
    b = fit_random_forest(X, y, M=12, cfg=TreeConfig(max_features=2), seed=1, n_jobs=3)
    np.testing.assert_array_equal(a.predict(probe), b.predict(probe))
    rev = EnsembleModel(a.kind, a.members[::-1], a.member_weights[::-1])
    np.testing.assert_allclose(rev.predict(probe), a.predict(probe), atol=1e-12)


def _brute_median(p, w):
    total = w.sum()
    for v in np.sort(p):
        if w[p <= v].sum() >= 0.5 * total:
            return v


def test_weighted_median_brute_force():
    rng = np.random.default_rng(2)
    for _ in range(20):
        M = int(rng.integers(1, 12))
        P = rng.integers(0, 6, (M, 5)).astype(float)   # ties included
        w = rng.uniform(0.01, 2, M)
        got = weighted_median(P, w)
        np.testing.assert_array_equal(got, [_brute_median(P[:, i], w) for i in range(5)])


def test_adaboost_single_round_is_base(rng):
    X, y = _data(rng)
    m = fit_adaboost_r2(X, y, M=1)
    probe = rng.uniform(-1, 1, (30, 3))
    np.testing.assert_array_equal(m.predict(probe), m.members[0].predict(probe))


def test_adaboost_perfect_learner(rng):
    X = rng.normal(size=(40, 2))
    y = np.where(X[:, 0] > 0, 1.0, -1.0)
    m = fit_adaboost_r2(X, y, M=5, base=TreeConfig())
    assert m.info["avg_loss"][0] == pytest.approx(1e-10)
    np.testing.assert_array_equal(m.predict(X), m.members[0].predict(X))


@settings(max_examples=15, deadline=None)
@given(st.integers(0, 2**31), st.sampled_from(["linear", "square", "exponential"]))
def test_adaboost_within_member_range(seed, loss):
    rng = np.random.default_rng(seed)
    X, y = _data(rng, n=60)
    m = fit_adaboost_r2(X, y, M=10, loss=loss, seed=seed)
    probe = rng.uniform(-1.5, 1.5, (25, 3))
    P = m.member_predictions(probe)
    pred = m.predict(probe)
    assert np.all(pred >= P.min(0)) and np.all(pred <= P.max(0))
    assert np.all(m.member_weights > 0)


def test_adaboost_probe_order_invariance(rng):
    X, y = _data(rng)
    m = fit_adaboost_r2(X, y, M=10)
    probe = rng.uniform(-1, 1, (30, 3))
    perm = rng.permutation(30)
    np.testing.assert_array_equal(m.predict(probe)[perm], m.predict(probe[perm]))


def test_gbm_constant_model(rng):
    X, y = _data(rng)
    m = fit_gbm(X, y, M=1, learning_rate=1.0, subsample=1.0, base=TreeConfig(max_depth=0))
    np.testing.assert_allclose(m.predict(X), y.mean(), atol=1e-12)


def test_gbm_training_loss_non_increasing(rng):
    X, y = _data(rng)
    _, hist = fit_gbm(X, y, M=60, subsample=1.0, return_history=True)
    assert np.all(np.diff(hist) <= 1e-12)


def test_gbm_interpolates(rng):
    X, y = _data(rng, n=50)
    m = fit_gbm(X, y, M=50, learning_rate=1.0, subsample=1.0, base=TreeConfig())
    assert np.max(np.abs(m.predict(X) - y)) < 1e-6


def test_gbm_prediction_definition(rng):
    X, y = _data(rng)
    m = fit_gbm(X, y, M=20, seed=4)
    probe = rng.uniform(-1, 1, (30, 3))
    np.testing.assert_allclose(m.predict(probe),
                               m.init + m.learning_rate * m.member_predictions(probe).sum(0),
                               atol=1e-12)


def test_deterministic_under_seed(rng):
    X, y = _data(rng)
    probe = rng.uniform(-1, 1, (30, 3))
    for fit in (lambda s: fit_bagging(X, y, M=5, seed=s), lambda s: fit_adaboost_r2(X, y, M=5, seed=s),
                lambda s: fit_gbm(X, y, M=5, seed=s)):
        np.testing.assert_array_equal(fit(9).predict(probe), fit(9).predict(probe))
        assert not np.array_equal(fit(9).predict(probe), fit(10).predict(probe))


def test_errors(rng):
    X, y = _data(rng)
    with pytest.raises(InvalidArgument):
        fit_bagging(X, y, M=0)
    with pytest.raises(InvalidArgument):
        fit_gbm(X, y, subsample=0.0)
    with pytest.raises(InvalidArgument):
        fit_adaboost_r2(X, y, loss="hinge")
    with pytest.raises(InvalidArgument):
        predict_ensemble(fit_bagging(X, y, M=2), np.zeros((2, 4)))


def test_packed_members_match_individual_trees(rng):
    X, y = _data(rng)
    probe = rng.uniform(-1.2, 1.2, (40, 3))
    reg = fit_random_forest(X, y, M=7, cfg=TreeConfig(max_features=2), seed=2, bootstrap=True)
    np.testing.assert_array_equal(reg.member_predictions(probe),
                                  np.array([t.predict(probe) for t in reg.members]))
    yc = np.digitize(y, [-0.5, 0.5, 1.0]) + 1
    cls = fit_bagging(X, yc, M=7, cfg=TreeConfig(task="classification"), seed=2)
    np.testing.assert_array_equal(cls.member_predictions(probe),
                                  np.array([t.predict(probe) for t in cls.members]))
