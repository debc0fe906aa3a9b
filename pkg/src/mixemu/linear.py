"""Penalized linear regressors, multinomial logistic regression, kernel ridge.

The regressors share one objective

    ||Xw - y||^2 + a1 ||w||_1 + a2 ||w||^2            (squared loss)
    sum_i [s + s H_eps(r_i / s)] + a1 ||w||_1         (Huber loss, joint scale s)

and differ only in which penalties are switched on.  The intercept is never
penalized.
"""

from dataclasses import dataclass

import numpy as np
import scipy.linalg as sla

from ._util import as_2d, check_xy, logsumexp, softmax, sq_dists
from .errors import CapacityError, InvalidArgument, NumericalError, RankDeficient

KERNEL_RIDGE_MAX_ROWS = 20_000


@dataclass(frozen=True)
class LinearConfig:
    alpha1: float = 0.0
    alpha2: float = 0.0
    l1_ratio: float | None = None
    loss: str = "squared"          # "squared" or "huber"
    epsilon: float = 1.35          # Huber threshold, in units of the scale
    max_iter: int = 1000
    tol: float = 1e-4
    fit_intercept: bool = True

    def __post_init__(self):
        if self.alpha1 < 0 or self.alpha2 < 0:
            raise InvalidArgument("penalties must be >= 0")
        if self.loss not in ("squared", "huber"):
            raise InvalidArgument(f"unknown loss {self.loss!r}")
        if self.loss == "huber" and not self.epsilon > 0:
            raise InvalidArgument("Huber epsilon must be > 0")
        if self.max_iter < 1:
            raise InvalidArgument("max_iter must be >= 1")

    @classmethod
    def elastic_net(cls, alpha, l1_ratio, **kw):
        return cls(alpha1=alpha * l1_ratio, alpha2=alpha * (1.0 - l1_ratio), l1_ratio=l1_ratio, **kw)


@dataclass(frozen=True, eq=False)
class LinearModel:
    weights: np.ndarray
    intercept: float
    family: str = "linear"
    n_iter: int = 0
    converged: bool = True
    objective: float = np.nan
    scale: float = np.nan     # Huber joint scale, nan otherwise

    @property
    def n_features(self):
        return self.weights.shape[0]

    def predict(self, X):
        X = as_2d(X, self.n_features)
        return X @ self.weights + self.intercept


def family_of(cfg):
    if cfg.loss == "huber":
        return "huber"
    if cfg.alpha1 > 0 and cfg.alpha2 > 0:
        return "enet"
    if cfg.alpha1 > 0:
        return "lasso"
    if cfg.alpha2 > 0:
        return "ridge"
    return "lsqr"


def objective(X, y, w, w0, cfg, scale=None):
    r = X @ w + w0 - y
    pen = cfg.alpha1 * np.abs(w).sum()
    if cfg.loss == "huber":
        z = np.abs(r) / scale
        eps = cfg.epsilon
        h = np.where(z < eps, z * z, 2 * eps * z - eps * eps)
        return float(np.sum(scale + scale * h) + pen)
    return float(r @ r + pen + cfg.alpha2 * (w @ w))


def _center(X, y, sw, fit_intercept):
    if not fit_intercept:
        return X, y, np.zeros(X.shape[1]), 0.0
    tot = sw.sum()
    xm = sw @ X / tot
    ym = float(sw @ y / tot)
    return X - xm, y - ym, xm, ym


def _weighted_penalized_ls(X, y, sw, a1, a2, fit_intercept, max_iter, tol, w_start=None):
    """min sum sw_i (x_i w + w0 - y_i)^2 + a1 |w|_1 + a2 |w|^2."""
    Xc, yc, xm, ym = _center(X, y, sw, fit_intercept)
    Xw = Xc * sw[:, None]
    G = Xc.T @ Xw
    c = Xw.T @ yc
    p = G.shape[0]
    if a1 == 0:
        if a2 == 0 and np.linalg.matrix_rank(Xc * np.sqrt(sw)[:, None]) < p:
            raise RankDeficient("design matrix is rank deficient and no penalty is set")
        try:
            w = sla.cho_solve(sla.cho_factor(G + a2 * np.eye(p)), c)
        except sla.LinAlgError as exc:
            raise RankDeficient(str(exc)) from exc
        return w, ym - xm @ w, 1, True
    # cyclic coordinate descent on the Gram form
    w = np.zeros(p) if w_start is None else np.array(w_start, dtype=float)
    ysq = float(sw @ (yc * yc))
    f_old = ysq - 2 * c @ w + w @ G @ w + a1 * np.abs(w).sum() + a2 * w @ w
    converged = False
    it = 0
    for it in range(1, max_iter + 1):
        for j in range(p):
            if G[j, j] == 0:
                w[j] = 0.0
                continue
            rho = c[j] - G[j] @ w + G[j, j] * w[j]
            w[j] = np.sign(rho) * max(abs(rho) - 0.5 * a1, 0.0) / (G[j, j] + a2)
        f = ysq - 2 * c @ w + w @ G @ w + a1 * np.abs(w).sum() + a2 * w @ w
        if f_old - f <= tol * max(abs(f_old), 1e-300):
            converged = True
            break
        f_old = f
    return w, ym - xm @ w, it, converged


def _huber_scale(r, scale, eps, n):
    for _ in range(100):
        inl = np.abs(r) < eps * scale
        denom = n - eps * eps * (n - inl.sum())
        if denom <= 0 or not inl.any():
            return max(float(np.median(np.abs(r))) / 0.6745, 1e-12)
        new = np.sqrt((r[inl] ** 2).sum() / denom)
        new = max(float(new), 1e-12)
        if abs(new - scale) <= 1e-12 * scale:
            return new
        scale = new
    return scale


def fit_linear(X, y, cfg=LinearConfig()):
    X, y = check_xy(X, y, min_rows=2)
    y = y.astype(float)
    n, p = X.shape
    ones = np.ones(n)
    if cfg.loss == "squared":
        w, w0, it, conv = _weighted_penalized_ls(
            X, y, ones, cfg.alpha1, cfg.alpha2, cfg.fit_intercept, cfg.max_iter, cfg.tol)
        return LinearModel(w, float(w0), family_of(cfg), it, conv, objective(X, y, w, w0, cfg))

    # Huber: alternate the exact scale update with reweighted least squares
    w, w0, _, _ = _weighted_penalized_ls(X, y, ones, cfg.alpha1, max(cfg.alpha2, 1e-10 * n),
                                         cfg.fit_intercept, cfg.max_iter, cfg.tol)
    r = y - X @ w - w0
    scale = max(float(np.sqrt(np.mean(r * r))), 1e-12)
    scale = _huber_scale(r, scale, cfg.epsilon, n)
    f_old = objective(X, y, w, w0, cfg, scale)
    converged = False
    it = 0
    for it in range(1, cfg.max_iter + 1):
        ar = np.abs(r)
        sw = np.where(ar < cfg.epsilon * scale, 1.0 / scale, cfg.epsilon / np.maximum(ar, 1e-300))
        w, w0, _, _ = _weighted_penalized_ls(X, y, sw, cfg.alpha1, cfg.alpha2, cfg.fit_intercept,
                                             cfg.max_iter, cfg.tol, w_start=w)
        r = y - X @ w - w0
        scale = _huber_scale(r, scale, cfg.epsilon, n)
        f = objective(X, y, w, w0, cfg, scale)
        if f_old - f <= cfg.tol * max(abs(f_old), 1e-300):
            converged = True
            break
        f_old = f
    return LinearModel(w, float(w0), "huber", it, converged, f, scale)


def quadratic_features(X):
    """Append all degree-2 monomials: (a, b) -> (a, b, a^2, ab, b^2)."""
    X = as_2d(X)
    p = X.shape[1]
    i, j = np.triu_indices(p)
    return np.hstack([X, X[:, i] * X[:, j]])


@dataclass(frozen=True, eq=False)
class PolynomialModel:
    linear: LinearModel
    n_features: int

    @property
    def family(self):
        return "poly"

    def predict(self, X):
        return self.linear.predict(quadratic_features(as_2d(X, self.n_features)))


def fit_polynomial(X, y, cfg=LinearConfig()):
    X = as_2d(X)
    return PolynomialModel(fit_linear(quadratic_features(X), y, cfg), X.shape[1])


# ---------------------------------------------------------------------------
# multinomial logistic regression


@dataclass(frozen=True, eq=False)
class LogisticModel:
    coef: np.ndarray        # (n_features, n_classes)
    intercept: np.ndarray   # (n_classes,)
    classes: np.ndarray
    n_iter: int = 0
    converged: bool = True

    @property
    def n_features(self):
        return self.coef.shape[0]

    def predict_proba(self, X):
        X = as_2d(X, self.n_features)
        return softmax(X @ self.coef + self.intercept)

    def predict(self, X):
        return self.classes[np.argmax(self.predict_proba(X), axis=1)]


def logistic_loss_grad(params, X, Y, alpha2):
    """Mean cross-entropy plus ``alpha2 |W|^2`` and its gradient.

    ``params`` packs ``W`` (p, K) followed by the intercepts (K,).
    """
    n, p = X.shape
    K = Y.shape[1]
    W = params[: p * K].reshape(p, K)
    b = params[p * K:]
    Z = X @ W + b
    lse = logsumexp(Z)
    loss = float(np.mean(lse - (Y * Z).sum(1)) + alpha2 * (W * W).sum())
    P = np.exp(Z - lse[:, None])
    D = (P - Y) / n
    gW = X.T @ D + 2 * alpha2 * W
    gb = D.sum(0)
    return loss, np.concatenate([gW.ravel(), gb])


def fit_logistic(X, y, cfg=LinearConfig(max_iter=500, tol=1e-8), seed=0):
    """Gradient descent with Barzilai-Borwein trial steps and Armijo backtracking.

    The problem is convex and started from zero, so ``seed`` has no effect on
    the result; it is accepted for interface uniformity.
    """
    X, y = check_xy(X, y, min_rows=2)
    classes = np.unique(y)
    if classes.size < 2:
        raise InvalidArgument("logistic regression needs at least two classes")
    Y = (y[:, None] == classes[None, :]).astype(float)
    p, K = X.shape[1], classes.size
    theta = np.zeros(p * K + K)
    f, g = logistic_loss_grad(theta, X, Y, cfg.alpha2)
    step = 1.0
    converged = False
    it = 0
    for it in range(1, cfg.max_iter + 1):
        gg = g @ g
        if gg == 0:
            converged = True
            break
        while True:
            cand = theta - step * g
            fc, gc = logistic_loss_grad(cand, X, Y, cfg.alpha2)
            if fc <= f - 1e-4 * step * gg or step < 1e-16:
                break
            step *= 0.5
        s, dg = cand - theta, gc - g
        theta, f_old, f, g = cand, f, fc, gc
        sy = s @ dg
        step = (s @ s) / sy if sy > 1e-300 else 2 * step
        if f_old - f <= cfg.tol * max(abs(f_old), 1e-300):
            converged = True
            break
    W = theta[: p * K].reshape(p, K)
    return LogisticModel(W, theta[p * K:], classes, it, converged)


# ---------------------------------------------------------------------------
# kernel ridge


def rbf_kernel(A, B, lam):
    return np.exp(-lam * sq_dists(as_2d(A), as_2d(B)))


@dataclass(frozen=True, eq=False)
class KernelRidgeModel:
    dual_coef: np.ndarray
    X_train: np.ndarray
    lam: float
    alpha: float

    @property
    def n_features(self):
        return self.X_train.shape[1]

    def predict(self, X):
        X = as_2d(X, self.n_features)
        return rbf_kernel(X, self.X_train, self.lam) @ self.dual_coef


def fit_kernel_ridge(X, y, alpha=1e-4, lam=1.0, max_rows=KERNEL_RIDGE_MAX_ROWS):
    X, y = check_xy(X, y)
    if X.shape[0] > max_rows:
        raise CapacityError(f"kernel ridge stores a dense {X.shape[0]}^2 kernel; cap is {max_rows} rows")
    K = rbf_kernel(X, X, lam)
    K[np.diag_indices_from(K)] += alpha
    try:
        coef = sla.cho_solve(sla.cho_factor(K), y.astype(float))
    except sla.LinAlgError as exc:
        raise NumericalError(f"kernel matrix is not positive definite: {exc}") from exc
    return KernelRidgeModel(coef, X.copy(), float(lam), float(alpha))


def predict(model, X):
    return model.predict(X)
