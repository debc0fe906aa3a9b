"""Bayesian ridge, Gaussian-process regression, Gaussian naive Bayes, LDA/QDA."""

import logging
from dataclasses import dataclass

import numpy as np
import scipy.linalg as sla

from ._util import as_2d, check_xy, logsumexp, softmax, sq_dists
from .errors import CapacityError, InvalidArgument, NumericalError

log = logging.getLogger(__name__)

GP_MAX_ROWS = 20_000
JITTER_LADDER = (0.0, 1e-10, 1e-9, 1e-8, 1e-7, 1e-6)


# ---------------------------------------------------------------------------
# Bayesian ridge


@dataclass(frozen=True)
class GammaPriors:
    """Shape/rate pairs of the gamma hyperpriors on the two precisions."""
    beta_shape: float = 1e-6
    beta_rate: float = 1e-6
    omega_shape: float = 1e-6
    omega_rate: float = 1e-6


@dataclass(frozen=True, eq=False)
class BayesianRidgeModel:
    mean: np.ndarray         # posterior mean of the weights
    cov: np.ndarray          # posterior covariance
    intercept: float
    beta: float              # noise precision
    omega: float             # weight precision
    priors: GammaPriors
    evidence: np.ndarray     # log marginal likelihood per iteration
    n_iter: int
    converged: bool

    @property
    def n_features(self):
        return self.mean.shape[0]

    def predict(self, X, return_std=False):
        X = as_2d(X, self.n_features)
        mu = X @ self.mean + self.intercept
        if not return_std:
            return mu
        var = np.einsum("ij,jk,ik->i", X, self.cov, X) + 1.0 / self.beta
        return mu, np.sqrt(var)


class _Eig:
    """Posterior quantities of Bayesian ridge for any (beta, omega), via one eigensolve."""

    def __init__(self, X, y):
        self.X, self.y = X, y
        self.n, self.p = X.shape
        self.s, self.V = np.linalg.eigh(X.T @ X)
        self.s = np.maximum(self.s, 0.0)
        self.Vty = self.V.T @ (X.T @ y)

    def posterior(self, beta, omega):
        d = omega + beta * self.s
        m = self.V @ (beta * self.Vty / d)
        return m, d

    def log_evidence(self, beta, omega, pr):
        m, d = self.posterior(beta, omega)
        r = self.y - self.X @ m
        rss = float(r @ r)
        return (pr.omega_shape * np.log(omega) - pr.omega_rate * omega
                + pr.beta_shape * np.log(beta) - pr.beta_rate * beta
                + 0.5 * (self.p * np.log(omega) + self.n * np.log(beta)
                         - beta * rss - omega * float(m @ m)
                         - np.sum(np.log(d)) - self.n * np.log(2 * np.pi)))

    def mackay(self, beta, omega, pr):
        m, d = self.posterior(beta, omega)
        r = self.y - self.X @ m
        gamma = float(np.sum(beta * self.s / d))
        omega_new = (gamma + 2 * pr.omega_shape) / (float(m @ m) + 2 * pr.omega_rate)
        beta_new = (self.n - gamma + 2 * pr.beta_shape) / (float(r @ r) + 2 * pr.beta_rate)
        return beta_new, omega_new

    def em(self, beta, omega, pr):
        m, d = self.posterior(beta, omega)
        r = self.y - self.X @ m
        tr_cov = float(np.sum(1.0 / d))
        tr_xcov = float(np.sum(self.s / d))
        omega_new = (self.p + 2 * pr.omega_shape) / (float(m @ m) + tr_cov + 2 * pr.omega_rate)
        beta_new = (self.n + 2 * pr.beta_shape) / (float(r @ r) + tr_xcov + 2 * pr.beta_rate)
        return beta_new, omega_new


def fit_bayesian_ridge(X, y, max_iter=100, tol=1e-4, priors=GammaPriors(), fit_intercept=True,
                       beta0=None, omega0=1.0, freeze=False):
    """Evidence maximization for the noise precision beta and weight precision omega.

    Each iteration tries the fixed-point (MacKay) update and falls back to an EM
    step, which never lowers the evidence, whenever the fixed point would.
    With ``freeze=True`` the starting precisions are kept and only the posterior
    is computed.
    """
    X, y = check_xy(X, y, min_rows=2)
    y = y.astype(float)
    if not np.all(np.isfinite(y)):
        raise InvalidArgument("targets contain non-finite values")
    xm = X.mean(0) if fit_intercept else np.zeros(X.shape[1])
    ym = float(y.mean()) if fit_intercept else 0.0
    eig = _Eig(X - xm, y - ym)
    if beta0 is None:
        beta0 = 1.0 / max(float(np.var(y)), 1e-12)
    beta, omega = float(beta0), float(omega0)
    ev = [eig.log_evidence(beta, omega, priors)]
    m_old, _ = eig.posterior(beta, omega)
    converged = freeze
    it = 0
    while not freeze and it < max_iter:
        it += 1
        cand = eig.mackay(beta, omega, priors)
        e = eig.log_evidence(*cand, priors) if np.all(np.isfinite(cand)) else -np.inf
        if not e >= ev[-1]:
            cand = eig.em(beta, omega, priors)
            e = eig.log_evidence(*cand, priors)
        beta, omega = cand
        ev.append(e)
        m, _ = eig.posterior(beta, omega)
        if np.sum(np.abs(m - m_old)) < tol:
            converged = True
            break
        m_old = m
    m, d = eig.posterior(beta, omega)
    cov = (eig.V / d) @ eig.V.T
    return BayesianRidgeModel(m, cov, ym - float(xm @ m), beta, omega, priors,
                              np.array(ev), it, converged)


# ---------------------------------------------------------------------------
# Gaussian process


def rbf(A, B, lam):
    return np.exp(-lam * sq_dists(A, B))


@dataclass(frozen=True, eq=False)
class GpModel:
    X_train: np.ndarray
    y_train: np.ndarray
    lam: float
    noise: float
    jitter: float
    chol: np.ndarray        # lower Cholesky factor of K + (noise + jitter) I
    alpha: np.ndarray       # (K + noise I)^-1 y

    @property
    def n_features(self):
        return self.X_train.shape[1]

    def predict(self, X, return_var=False):
        X = as_2d(X, self.n_features)
        Ks = rbf(X, self.X_train, self.lam)
        mean = Ks @ self.alpha
        if not return_var:
            return mean
        v = sla.solve_triangular(self.chol, Ks.T, lower=True)
        var = np.maximum(1.0 - (v * v).sum(0), 0.0)
        return mean, var


def gp_fit(X, y, lam=1.0, noise=1e-10, max_rows=GP_MAX_ROWS):
    X, y = check_xy(X, y)
    if X.shape[0] > max_rows:
        raise CapacityError(f"GP stores a dense {X.shape[0]}^2 kernel; cap is {max_rows} rows")
    if noise < 0:
        raise InvalidArgument("noise must be >= 0")
    K = rbf(X, X, lam)
    n = K.shape[0]
    for jit in JITTER_LADDER:
        try:
            L = np.linalg.cholesky(K + (noise + jit) * np.eye(n))
        except np.linalg.LinAlgError:
            continue
        if jit > 0:
            log.debug("GP kernel needed jitter %g", jit)
        alpha = sla.cho_solve((L, True), y.astype(float))
        return GpModel(X.copy(), y.astype(float), float(lam), float(noise), jit, L, alpha)
    raise NumericalError(f"kernel factorization failed with jitter up to {JITTER_LADDER[-1]}")


def gp_fit_predict(X, y, X_star, lam=1.0, noise=1e-10, max_rows=GP_MAX_ROWS):
    return gp_fit(X, y, lam, noise, max_rows).predict(X_star, return_var=True)


# ---------------------------------------------------------------------------
# Gaussian naive Bayes


@dataclass(frozen=True, eq=False)
class GaussianNbModel:
    classes: np.ndarray
    counts: np.ndarray      # (K,)
    means: np.ndarray       # (K, p)
    variances: np.ndarray   # (K, p) raw, before smoothing
    smoothing: float
    total: tuple            # (count, mean, var) over all rows, sets the smoothing floor

    @property
    def n_features(self):
        return self.means.shape[1]

    @property
    def priors(self):
        return self.counts / self.counts.sum()

    @property
    def epsilon(self):
        return self.smoothing * float(np.max(self.total[2]))

    def joint_log_likelihood(self, X):
        X = as_2d(X, self.n_features)
        var = self.variances + self.epsilon
        ll = -0.5 * np.sum(np.log(2 * np.pi * var), axis=1)[None, :]
        ll = ll - 0.5 * (((X[:, None, :] - self.means[None]) ** 2) / var[None]).sum(2)
        return ll + np.log(self.priors)[None, :]

    def predict_log_proba(self, X):
        jll = self.joint_log_likelihood(X)
        return jll - logsumexp(jll)[:, None]

    def predict_proba(self, X):
        return np.exp(self.predict_log_proba(X))

    def predict(self, X):
        return self.classes[np.argmax(self.joint_log_likelihood(X), axis=1)]


def _merge(n_a, mu_a, var_a, n_b, mu_b, var_b):
    """Combine population moments of two disjoint samples."""
    n = n_a + n_b
    if n_a == 0:
        return n_b, mu_b, var_b
    delta = mu_b - mu_a
    mu = mu_a + delta * (n_b / n)
    m2 = var_a * n_a + var_b * n_b + delta * delta * (n_a * n_b / n)
    return n, mu, m2 / n


def _moments(X):
    return X.shape[0], X.mean(0), X.var(0)


def update_gaussian_nb(model, X, y):
    """Fold another batch into the sufficient statistics; returns a new model."""
    X, y = check_xy(X, y)
    if not np.all(np.isin(np.unique(y), model.classes)):
        raise InvalidArgument("batch contains classes unknown to the model")
    counts = model.counts.copy()
    means = model.means.copy()
    variances = model.variances.copy()
    for k, c in enumerate(model.classes):
        Xc = X[y == c]
        if Xc.shape[0]:
            counts[k], means[k], variances[k] = _merge(counts[k], means[k], variances[k], *_moments(Xc))
    total = _merge(*model.total, *_moments(X))
    return GaussianNbModel(model.classes, counts, means, variances, model.smoothing, total)


def fit_gaussian_nb(X, y, smoothing=1e-9, batch_size=None, classes=None):
    """One-shot fit, or streamed in batches of ``batch_size`` rows."""
    X, y = check_xy(X, y)
    classes = np.unique(y) if classes is None else np.asarray(classes)
    if classes.size < 2:
        raise InvalidArgument("naive Bayes needs at least two classes")
    p = X.shape[1]
    K = classes.size
    model = GaussianNbModel(classes, np.zeros(K), np.zeros((K, p)), np.zeros((K, p)),
                            float(smoothing), (0, np.zeros(p), np.zeros(p)))
    step = X.shape[0] if batch_size is None else int(batch_size)
    for lo in range(0, X.shape[0], step):
        model = update_gaussian_nb(model, X[lo:lo + step], y[lo:lo + step])
    return model


def predict_nb(model, X):
    lp = model.predict_log_proba(X)
    return model.classes[np.argmax(lp, axis=1)], lp


# ---------------------------------------------------------------------------
# discriminant analysis


@dataclass(frozen=True, eq=False)
class DiscriminantModel:
    kind: str               # "lda" or "qda"
    classes: np.ndarray
    means: np.ndarray       # (K, p)
    priors: np.ndarray      # (K,)
    covs: np.ndarray        # (K, p, p); LDA repeats the pooled matrix
    chols: np.ndarray       # lower Cholesky factors of the regularized covs
    tol: float

    @property
    def n_features(self):
        return self.means.shape[1]

    def log_density(self, X):
        """log N(x; mu_k, Sigma_k) + log prior_k, shape (n, K)."""
        X = as_2d(X, self.n_features)
        out = np.empty((X.shape[0], self.classes.size))
        p = self.n_features
        for k in range(self.classes.size):
            L = self.chols[k]
            z = sla.solve_triangular(L, (X - self.means[k]).T, lower=True)
            logdet = 2 * np.sum(np.log(np.diag(L)))
            out[:, k] = -0.5 * ((z * z).sum(0) + logdet + p * np.log(2 * np.pi)) + np.log(self.priors[k])
        return out

    def predict_proba(self, X):
        return softmax(self.log_density(X))

    def predict(self, X):
        return self.classes[np.argmax(self.log_density(X), axis=1)]


def _regularized_chol(S, tol):
    p = S.shape[0]
    scale = max(float(np.trace(S)) / p, 1e-300)
    try:
        return np.linalg.cholesky(S + tol * scale * np.eye(p))
    except np.linalg.LinAlgError as exc:
        raise NumericalError(f"covariance is singular even with jitter {tol}") from exc


def fit_discriminant(X, y, kind="lda", tol=1e-4, covs=None):
    """Gaussian class-conditional classifier with pooled (LDA) or per-class (QDA) covariance.

    ``covs`` (K, p, p) overrides the estimated covariances.
    """
    if kind not in ("lda", "qda"):
        raise InvalidArgument(f"unknown discriminant kind {kind!r}")
    X, y = check_xy(X, y)
    classes = np.unique(y)
    K, p = classes.size, X.shape[1]
    if K < 2:
        raise InvalidArgument("discriminant analysis needs at least two classes")
    n = X.shape[0]
    means = np.array([X[y == c].mean(0) for c in classes])
    counts = np.array([np.sum(y == c) for c in classes])
    if covs is None:
        if kind == "qda":
            if np.any(counts <= p):
                raise InvalidArgument("QDA needs more samples than features in every class")
            covs = np.array([np.cov(X[y == c].T, ddof=1).reshape(p, p) for c in classes])
        else:
            if n - K < p:
                raise InvalidArgument("LDA needs more pooled samples than features")
            R = X - means[np.searchsorted(classes, y)]
            pooled = R.T @ R / (n - K)
            covs = np.repeat(pooled[None], K, axis=0)
    covs = np.asarray(covs, dtype=float)
    chols = np.array([_regularized_chol(S, tol) for S in covs])
    return DiscriminantModel(kind, classes, means, counts / n, covs, chols, float(tol))
