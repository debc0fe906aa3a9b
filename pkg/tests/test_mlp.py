import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from mixemu.errors import InvalidArgument, TrainingDiverged
from mixemu.metrics import r2_score
from mixemu.mlp import MlpConfig, MlpModel, forward, init_model, loss_and_gradient, train


def _fd_check(model, X, Y, alpha, h=1e-5):
    """Largest relative error between analytic and central-difference gradients."""
    _, gW, gb = loss_and_gradient(model, X, Y, alpha)
    params = list(model.weights) + list(model.biases)
    grads = gW + gb
    worst = 0.0
    for q, g in zip(params, grads):
        fd = np.zeros_like(q)
        for idx in np.ndindex(q.shape):
            old = q[idx]
            q[idx] = old + h
            lp = loss_and_gradient(model, X, Y, alpha)[0]
            q[idx] = old - h
            lm = loss_and_gradient(model, X, Y, alpha)[0]
            q[idx] = old
            fd[idx] = (lp - lm) / (2 * h)
        worst = max(worst, np.linalg.norm(fd - g) / max(np.linalg.norm(g), 1e-12))
    return worst


@pytest.mark.parametrize("head,activation", [("linear", "relu"), ("softmax", "relu"),
                                             ("linear", "tanh"), ("softmax", "logistic")])
def test_gradient_at_init(head, activation, rng):
    model = init_model([6, 4, 2], activation, head, seed=1)
    X = rng.normal(size=(12, 6))
    Y = np.eye(2)[rng.integers(0, 2, 12)] if head == "softmax" else rng.normal(size=(12, 2))
    assert _fd_check(model, X, Y, alpha=0.3) < 1e-4


def test_gradient_after_training(rng):
    X = rng.normal(size=(40, 6))
    y = rng.integers(0, 2, 40)
    m = train(X, y, MlpConfig(hidden=(4,), max_iter=10, batch_size=8, tol=-np.inf), "classification")
    assert m.layer_sizes == [6, 4, 2]
    W = tuple(w.copy() for w in m.weights)
    b = tuple(v.copy() for v in m.biases)
    model = MlpModel(W, b, m.activation, m.head, m.classes)
    assert _fd_check(model, X, np.eye(2)[y], alpha=1e-2) < 1e-4


def test_zero_weights_output_zero(rng):
    m = init_model([3, 5, 1])
    m = MlpModel(tuple(np.zeros_like(w) for w in m.weights), m.biases)
    np.testing.assert_array_equal(forward(m, rng.normal(size=(4, 3))), 0.0)


def test_relu_example():
    m = MlpModel((np.eye(2), np.eye(2)), (np.zeros(2), np.zeros(2)))
    np.testing.assert_array_equal(forward(m, np.array([[-1.0, 2.0]])), [[0.0, 2.0]])


def test_softmax_uniform():
    m = MlpModel((np.zeros((2, 4)),), (np.zeros(4),), head="softmax", classes=np.arange(4))
    np.testing.assert_allclose(m.predict_proba(np.array([[1.0, -3.0]])), 0.25)


def test_softmax_rows_sum_to_one(rng):
    m = init_model([3, 8, 4], head="softmax", classes=np.arange(4), seed=3)
    P = m.predict_proba(rng.normal(size=(50, 3)) * 100)
    np.testing.assert_allclose(P.sum(1), 1.0, atol=1e-10)


def test_perfect_batch_zero_loss(rng):
    m = init_model([3, 4, 1], seed=2)
    X = rng.normal(size=(10, 3))
    loss, gW, gb = loss_and_gradient(m, X, forward(m, X), alpha=0.0)
    assert loss == 0.0
    assert max(np.abs(g).max() for g in gW + gb) < 1e-12


def test_penalty_gradient_linear_in_alpha(rng):
    m = init_model([3, 4, 2], seed=2)
    X, Y = rng.normal(size=(10, 3)), rng.normal(size=(10, 2))
    g0 = loss_and_gradient(m, X, Y, 0.0)[1]
    g1 = loss_and_gradient(m, X, Y, 0.5)[1]
    g2 = loss_and_gradient(m, X, Y, 1.0)[1]
    for a, b, c in zip(g0, g1, g2):
        np.testing.assert_allclose(c - a, 2 * (b - a), atol=1e-12)


def test_linear_target_recovered(rng):
    x = rng.uniform(-1, 1, (200, 1))
    xt = rng.uniform(-1, 1, (50, 1))
    m = train(x, 3 * x[:, 0] + 1, MlpConfig(hidden=(), alpha=0.0, learning_rate=0.05, max_iter=500,
                                             batch_size=32, tol=0.0))
    assert r2_score(3 * xt[:, 0] + 1, m.predict(xt)) >= 0.999


def test_same_seed_same_history(rng):
    X, y = rng.normal(size=(60, 2)), rng.normal(size=60)
    cfg = MlpConfig(hidden=(8,), max_iter=15, batch_size=16)
    np.testing.assert_array_equal(train(X, y, cfg).loss_history, train(X, y, cfg).loss_history)


def test_full_batch_small_step_monotone(rng):
    X = rng.normal(size=(50, 3))
    y = np.sin(X[:, 0]) + X[:, 1]
    cfg = MlpConfig(hidden=(10,), learning_rate=1e-4, max_iter=100, batch_size=50, tol=-np.inf)
    h = train(X, y, cfg).loss_history
    assert h.size == 100
    assert np.all(np.diff(h) <= 0)


@settings(max_examples=30, deadline=None)
@given(st.integers(0, 2**31), st.floats(0.01, 100))
def test_positive_homogeneity(seed, c):
    rng = np.random.default_rng(seed)
    m = init_model([3, 7, 2], seed=seed)
    m = MlpModel(m.weights, tuple(np.zeros_like(v) for v in m.biases))
    x = rng.normal(size=(5, 3))
    np.testing.assert_allclose(forward(m, c * x), c * forward(m, x), rtol=1e-10, atol=1e-10)


@pytest.mark.filterwarnings("ignore::RuntimeWarning")
def test_divergence_reports_epoch():
    X = np.ones((4, 1))
    with pytest.raises(TrainingDiverged) as exc:
        train(X, np.full(4, 1e200), MlpConfig(hidden=(2,)))
    assert exc.value.epoch == 1


def test_classifier_output(rng):
    X = rng.normal(size=(200, 2))
    y = np.where(X[:, 0] > 0, 2, 4)
    m = train(X, y, MlpConfig(hidden=(10,), learning_rate=1e-2, max_iter=100), "classification")
    assert np.mean(m.predict(X) == y) > 0.95
    assert set(np.unique(m.predict(X))) <= {2, 4}


def test_errors(rng):
    with pytest.raises(InvalidArgument):
        MlpConfig(learning_rate=0)
    with pytest.raises(InvalidArgument):
        MlpConfig(activation="gelu")
    m = init_model([3, 2, 1])
    with pytest.raises(InvalidArgument):
        forward(m, np.zeros((1, 4)))
    with pytest.raises(InvalidArgument):
        m.predict_proba(np.zeros((1, 3)))
