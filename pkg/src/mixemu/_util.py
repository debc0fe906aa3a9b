import numpy as np

from .errors import InvalidArgument


def as_2d(X, n_features=None):
    X = np.asarray(X, dtype=float)
    if X.ndim == 1:
        X = X[:, None]
    if X.ndim != 2:
        raise InvalidArgument(f"expected a 2-D feature matrix, got shape {X.shape}")
    if n_features is not None and X.shape[1] != n_features:
        raise InvalidArgument(f"model expects {n_features} features, got {X.shape[1]}")
    return X


def check_xy(X, y, min_rows=1):
    X = as_2d(X)
    y = np.asarray(y)
    if y.ndim != 1 or y.shape[0] != X.shape[0]:
        raise InvalidArgument(f"X has {X.shape[0]} rows but y has shape {y.shape}")
    if X.shape[0] < min_rows:
        raise InvalidArgument(f"need at least {min_rows} rows, got {X.shape[0]}")
    if not np.all(np.isfinite(X)):
        raise InvalidArgument("features contain non-finite values")
    return X, y


def softmax(z):
    z = z - z.max(axis=1, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=1, keepdims=True)


def logsumexp(z):
    m = z.max(axis=1, keepdims=True)
    return (m + np.log(np.exp(z - m).sum(axis=1, keepdims=True)))[:, 0]


def sq_dists(A, B):
    d = (A * A).sum(1)[:, None] + (B * B).sum(1)[None, :] - 2.0 * A @ B.T
    return np.maximum(d, 0.0)
