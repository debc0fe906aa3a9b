"""Tree ensembles: bagging, random forest, AdaBoost.R2, gradient boosting."""

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from functools import cached_property

import numpy as np

from ._util import as_2d, check_xy
from .errors import InvalidArgument
from .trees import (TreeConfig, _apply_packed, canonical_order, fit_tree, pack_trees,
                    value_codes)

LOSS_CLAMP = 1e-10
ADABOOST_LOSSES = ("linear", "square", "exponential")


@dataclass(frozen=True, eq=False)
class EnsembleModel:
    kind: str                     # bagging, rf, adaboost, dt-adaboost, gbm
    members: list
    member_weights: np.ndarray    # log(1/theta) * gamma for boosting, ones otherwise
    learning_rate: float = 1.0
    init: float = 0.0             # GBM f0
    classes: np.ndarray | None = None
    info: dict = field(default_factory=dict)

    @property
    def n_features(self):
        return self.members[0].n_features

    @property
    def task(self):
        return "regression" if self.classes is None else "classification"

    @cached_property
    def _packed(self):
        return pack_trees(self.members)

    def _member_values(self, X):
        """(M, n, K) leaf values of every member, walked in one compiled pass."""
        X = np.ascontiguousarray(as_2d(X, self.n_features), dtype=float)
        feature, threshold, left, right, roots, value = self._packed
        return value[_apply_packed(X, feature, threshold, left, right, roots)]

    def member_predictions(self, X):
        V = self._member_values(X)
        if self.classes is None:
            return V[:, :, 0]
        return self.classes[np.argmax(V, axis=2)]

    def vote_fractions(self, X):
        P = self.member_predictions(X)
        return np.stack([(P == c).mean(0) for c in self.classes], axis=1)

    def predict(self, X):
        if self.classes is not None:
            return self.classes[np.argmax(self.vote_fractions(X), axis=1)]
        P = self.member_predictions(X)
        if self.kind in ("bagging", "rf"):
            return P.mean(0)
        if self.kind == "gbm":
            return self.init + self.learning_rate * P.sum(0)
        return weighted_median(P, self.member_weights)

    def predict_proba(self, X):
        return self.vote_fractions(X)


def weighted_median(P, w):
    """Column-wise weighted median of member predictions P (M, n).

    Smallest prediction whose cumulative weight reaches half the total.
    """
    P = np.asarray(P, dtype=float)
    if P.ndim == 1:
        P = P[:, None]
    order = np.argsort(P, axis=0, kind="mergesort")
    cw = np.cumsum(np.asarray(w, dtype=float)[order], axis=0)
    k = np.argmax(cw >= 0.5 * cw[-1], axis=0)
    return np.take_along_axis(P, order, axis=0)[k, np.arange(P.shape[1])]


def _member_seeds(seed, M):
    return np.random.SeedSequence(seed).generate_state(M, dtype=np.uint32)


def _prepare(X, y, task):
    X, y = check_xy(X, y)
    if task == "regression":
        perm = canonical_order(X, y.astype(float))
    else:
        perm = canonical_order(X, np.unique(y, return_inverse=True)[1].astype(float))
    return np.ascontiguousarray(X[perm]), y[perm]


def _fit_averaging(kind, X, y, M, cfg, bootstrap, seed, n_jobs):
    if M < 1:
        raise InvalidArgument("ensemble size must be >= 1")
    X, y = _prepare(X, y, cfg.task)
    classes = np.unique(y) if cfg.task == "classification" else None
    n = X.shape[0]
    seeds = _member_seeds(seed, M)
    codes = value_codes(X)

    def one(m):
        rng = np.random.default_rng(int(seeds[m]))
        rows = rng.integers(0, n, n) if bootstrap else None
        return fit_tree(X, y, cfg.replace(seed=int(seeds[m])), rows=rows, classes=classes,
                        canonical=False, codes=codes)

    if n_jobs > 1 and M > 1:
        with ThreadPoolExecutor(n_jobs) as ex:
            members = list(ex.map(one, range(M)))
    else:
        members = [one(m) for m in range(M)]
    return EnsembleModel(kind, members, np.ones(M), classes=classes,
                         info={"bootstrap": bootstrap, "seed": seed})


def fit_bagging(X, y, M=100, cfg=TreeConfig(), seed=0, bootstrap=True, n_jobs=1):
    """Trees on bootstrap resamples; per-node feature sampling follows ``cfg.max_features``."""
    return _fit_averaging("bagging", X, y, M, cfg, bootstrap, seed, n_jobs)


def fit_random_forest(X, y, M=500, cfg=TreeConfig(max_features=4), seed=0, bootstrap=False,
                      n_jobs=1):
    p = np.asarray(X).shape[1] if np.ndim(X) == 2 else 1
    if cfg.max_features is not None and cfg.max_features > p:
        cfg = cfg.replace(max_features=p)
    return _fit_averaging("rf", X, y, M, cfg, bootstrap, seed, n_jobs)


def adaboost_losses(err, J, loss):
    if J <= 0:
        return np.zeros_like(err)
    z = err / J
    if loss == "linear":
        return z
    if loss == "square":
        return z * z
    if loss == "exponential":
        return 1.0 - np.exp(-z)
    raise InvalidArgument(f"unknown AdaBoost loss {loss!r}")


def fit_adaboost_r2(X, y, M=100, base=TreeConfig(max_depth=3), learning_rate=1.0, loss="square",
                    seed=0, kind="adaboost"):
    """AdaBoost.R2 with weighted resampling and a weighted-median combination."""
    if M < 1:
        raise InvalidArgument("ensemble size must be >= 1")
    if loss not in ADABOOST_LOSSES:
        raise InvalidArgument(f"unknown AdaBoost loss {loss!r}")
    if base.task != "regression":
        raise InvalidArgument("AdaBoost.R2 is a regression method")
    X, y = _prepare(X, y, "regression")
    y = y.astype(float)
    n = X.shape[0]
    codes = value_codes(X)
    w = np.full(n, 1.0 / n)
    seeds = _member_seeds(seed, M)
    members, mweights, avg_losses = [], [], []
    for m in range(M):
        rng = np.random.default_rng(int(seeds[m]))
        cdf = np.cumsum(w)
        rows = np.minimum(np.searchsorted(cdf, rng.random(n) * cdf[-1], side="right"), n - 1)
        tree = fit_tree(X, y, base.replace(seed=int(seeds[m])), rows=rows, canonical=False,
                        codes=codes)
        err = np.abs(tree.predict(X) - y)
        L = adaboost_losses(err, err.max(), loss)
        Lbar = float(np.clip(w @ L / w.sum(), LOSS_CLAMP, 1 - LOSS_CLAMP))
        if Lbar >= 0.5 and members:
            break
        theta = Lbar / (1 - Lbar)
        members.append(tree)
        mweights.append(learning_rate * np.log(1.0 / theta))
        avg_losses.append(Lbar)
        if Lbar >= 0.5:
            break
        w = w * theta ** ((1.0 - L) * learning_rate)
        w /= w.sum()
    return EnsembleModel(kind, members, np.array(mweights), learning_rate,
                         info={"loss": loss, "avg_loss": avg_losses, "seed": seed})


def fit_gbm(X, y, M=100, learning_rate=0.1, subsample=0.5, base=TreeConfig(max_depth=3), seed=0,
            return_history=False):
    """Least-squares gradient boosting; the leaf means are the exact line search."""
    if M < 1:
        raise InvalidArgument("ensemble size must be >= 1")
    if not 0 < subsample <= 1:
        raise InvalidArgument("subsample must be in (0, 1]")
    if base.task != "regression":
        raise InvalidArgument("gradient boosting here is a regression method")
    X, y = _prepare(X, y, "regression")
    y = y.astype(float)
    n = X.shape[0]
    codes = value_codes(X)
    f0 = float(y.mean())
    f = np.full(n, f0)
    k = max(1, int(round(subsample * n)))
    seeds = _member_seeds(seed, M)
    members, history = [], []
    for m in range(M):
        rng = np.random.default_rng(int(seeds[m]))
        rows = np.arange(n) if k == n else np.sort(rng.choice(n, k, replace=False))
        tree = fit_tree(X, y - f, base.replace(seed=int(seeds[m])), rows=rows, canonical=False,
                        codes=codes)
        f = f + learning_rate * tree.predict(X)
        members.append(tree)
        history.append(float(np.mean((y - f) ** 2)))
    model = EnsembleModel("gbm", members, np.ones(M), learning_rate, f0,
                          info={"subsample": subsample, "seed": seed, "train_mse": history})
    return (model, history) if return_history else model


def predict_ensemble(model, X):
    return model.predict(X)
