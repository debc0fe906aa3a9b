"""Fully connected feed-forward network trained with Adam.

Regression minimizes half the mean squared error, classification the mean
cross-entropy of a softmax head.  Both add ``alpha / (2 n_batch) * |W|^2`` on
the weight matrices (biases are not penalized).
"""

from dataclasses import dataclass, field

import numpy as np

from ._util import as_2d, check_xy, logsumexp, softmax
from .errors import InvalidArgument, TrainingDiverged

ACTIVATIONS = ("relu", "tanh", "logistic")


@dataclass(frozen=True)
class MlpConfig:
    hidden: tuple = (200,)
    activation: str = "relu"
    alpha: float = 1e-4
    learning_rate: float = 1e-3
    max_iter: int = 200
    batch_size: int = 256
    tol: float = 1e-4
    n_iter_no_change: int = 10
    beta1: float = 0.9
    beta2: float = 0.999
    epsilon: float = 1e-8
    seed: int = 0

    def __post_init__(self):
        if self.activation not in ACTIVATIONS:
            raise InvalidArgument(f"activation must be one of {ACTIVATIONS}")
        if not self.learning_rate > 0:
            raise InvalidArgument("learning rate must be > 0")
        if self.max_iter < 1:
            raise InvalidArgument("max_iter must be >= 1")
        if self.batch_size < 1:
            raise InvalidArgument("batch_size must be >= 1")
        if any(int(h) < 1 for h in self.hidden):
            raise InvalidArgument("hidden layer widths must be >= 1")


@dataclass(frozen=True, eq=False)
class MlpModel:
    weights: tuple
    biases: tuple
    activation: str = "relu"
    head: str = "linear"          # or "softmax"
    classes: np.ndarray | None = None
    loss_history: np.ndarray = field(default_factory=lambda: np.zeros(0))
    squeeze: bool = True          # single-output regression returns a vector

    @property
    def n_features(self):
        return self.weights[0].shape[0]

    @property
    def layer_sizes(self):
        return [self.weights[0].shape[0]] + [W.shape[1] for W in self.weights]

    def predict_raw(self, X):
        return forward(self, X)

    def predict(self, X):
        out = forward(self, X)
        if self.head == "softmax":
            return self.classes[np.argmax(out, axis=1)]
        return out[:, 0] if self.squeeze and out.shape[1] == 1 else out

    def predict_proba(self, X):
        if self.head != "softmax":
            raise InvalidArgument("probabilities need a softmax head")
        return forward(self, X)


def _act(z, kind):
    if kind == "relu":
        return np.maximum(z, 0.0)
    if kind == "tanh":
        return np.tanh(z)
    return 0.5 * (1.0 + np.tanh(0.5 * z))


def _act_grad(a, z, kind):
    if kind == "relu":
        return (z > 0).astype(float)
    if kind == "tanh":
        return 1.0 - a * a
    return a * (1.0 - a)


def _forward_all(weights, biases, X, activation):
    zs, acts = [], [X]
    a = X
    for i, (W, b) in enumerate(zip(weights, biases)):
        z = a @ W + b
        zs.append(z)
        a = z if i == len(weights) - 1 else _act(z, activation)
        acts.append(a)
    return zs, acts


def forward(model, X):
    X = as_2d(X, model.n_features)
    _, acts = _forward_all(model.weights, model.biases, X, model.activation)
    out = acts[-1]
    return softmax(out) if model.head == "softmax" else out


def loss_and_gradient(model, X, Y, alpha=0.0):
    """Loss and gradients (dW list, db list) on one batch.

    ``Y`` is (n, outputs) for regression or one-hot (n, K) for classification.
    """
    X = as_2d(X, model.n_features)
    Y = np.asarray(Y, dtype=float)
    if Y.ndim == 1:
        Y = Y[:, None]
    n = X.shape[0]
    if n == 0:
        raise InvalidArgument("empty batch")
    zs, acts = _forward_all(model.weights, model.biases, X, model.activation)
    out = acts[-1]
    if model.head == "softmax":
        lse = logsumexp(out)
        loss = float(np.mean(lse - (Y * out).sum(1)))
        delta = (np.exp(out - lse[:, None]) - Y) / n
    else:
        r = out - Y
        loss = float(0.5 * np.mean((r * r).sum(1)))
        delta = r / n
    loss += 0.5 * alpha / n * sum(float((W * W).sum()) for W in model.weights)
    gW = [None] * len(model.weights)
    gb = [None] * len(model.weights)
    for i in range(len(model.weights) - 1, -1, -1):
        gW[i] = acts[i].T @ delta + (alpha / n) * model.weights[i]
        gb[i] = delta.sum(0)
        if i > 0:
            delta = (delta @ model.weights[i].T) * _act_grad(acts[i], zs[i - 1], model.activation)
    return loss, gW, gb


def init_model(sizes, activation="relu", head="linear", seed=0, classes=None, squeeze=True):
    """Uniform fan-in scaled initialization (He for ReLU, Glorot otherwise)."""
    rng = np.random.default_rng(seed)
    weights, biases = [], []
    for fan_in, fan_out in zip(sizes[:-1], sizes[1:]):
        if activation == "relu":
            bound = np.sqrt(6.0 / fan_in)
        else:
            bound = np.sqrt(6.0 / (fan_in + fan_out))
        weights.append(rng.uniform(-bound, bound, (fan_in, fan_out)))
        biases.append(np.zeros(fan_out))
    return MlpModel(tuple(weights), tuple(biases), activation, head, classes,
                    np.zeros(0), squeeze)


def train(X, y, cfg=MlpConfig(), task="regression"):
    """Mini-batch Adam; returns the model, whose ``loss_history`` holds per-epoch mean loss."""
    X, y = (check_xy(X, y) if np.ndim(y) == 1 else (as_2d(X), np.asarray(y, dtype=float)))
    n, p = X.shape
    if task == "classification":
        classes = np.unique(y)
        if classes.size < 2:
            raise InvalidArgument("classification needs at least two classes")
        Y = (y[:, None] == classes[None, :]).astype(float)
        head = "softmax"
    else:
        classes = None
        Y = y.astype(float).reshape(n, -1)
        head = "linear"
    sizes = [p] + [int(h) for h in cfg.hidden] + [Y.shape[1]]
    model = init_model(sizes, cfg.activation, head, cfg.seed, classes, np.ndim(y) == 1)
    W = [w.copy() for w in model.weights]
    b = [v.copy() for v in model.biases]
    params = W + b
    m1 = [np.zeros_like(q) for q in params]
    m2 = [np.zeros_like(q) for q in params]
    rng = np.random.default_rng(cfg.seed + 1)
    bs = min(cfg.batch_size, n)
    history = []
    best = np.inf
    stall = 0
    t = 0
    for epoch in range(1, cfg.max_iter + 1):
        order = rng.permutation(n)
        tot = 0.0
        for lo in range(0, n, bs):
            idx = order[lo:lo + bs]
            cur = MlpModel(tuple(W), tuple(b), cfg.activation, head, classes)
            loss, gW, gb = loss_and_gradient(cur, X[idx], Y[idx], cfg.alpha)
            if not np.isfinite(loss):
                raise TrainingDiverged(f"non-finite loss in epoch {epoch}", epoch)
            tot += loss * idx.size
            t += 1
            lr = cfg.learning_rate * np.sqrt(1 - cfg.beta2 ** t) / (1 - cfg.beta1 ** t)
            for q, g, a, v in zip(params, gW + gb, m1, m2):
                a *= cfg.beta1
                a += (1 - cfg.beta1) * g
                v *= cfg.beta2
                v += (1 - cfg.beta2) * g * g
                q -= lr * a / (np.sqrt(v) + cfg.epsilon)
        epoch_loss = tot / n
        if not np.isfinite(epoch_loss):
            raise TrainingDiverged(f"non-finite loss in epoch {epoch}", epoch)
        history.append(epoch_loss)
        if epoch_loss > best - cfg.tol:
            stall += 1
        else:
            stall = 0
        best = min(best, epoch_loss)
        if stall >= cfg.n_iter_no_change:
            break
    return MlpModel(tuple(W), tuple(b), cfg.activation, head, classes, np.array(history),
                    np.ndim(y) == 1)
