"""Name-indexed registry of the twenty emulator families.

Every family is fitted through :func:`fit_emulator`, which applies the
family's feature preprocessing (and, for the kernel methods, target
standardization) and returns an :class:`EmulatorModel` with one ``predict``.
"""

from dataclasses import dataclass, field

import numpy as np

from . import bayes, ensemble, linear, mlp
from .campaign import Dataset, Preprocessor
from .errors import InvalidArgument
from .trees import TreeConfig, fit_tree

REGRESSION = "regression"
CLASSIFICATION = "classification"
BOTH = (REGRESSION, CLASSIFICATION)


@dataclass(frozen=True)
class Family:
    name: str
    tasks: tuple
    preprocessing: str
    defaults: dict
    search_grid: dict          # hyperparameter ranges searched for this family
    scale_target: bool = False


# Defaults follow the best settings of the hyperparameter study; the search
# grids list its candidate ranges.
FAMILIES = {f.name: f for f in [
    Family("lsqr", (REGRESSION,), "standardize", {"fit_intercept": True},
           {"fit_intercept": [True, False]}),
    Family("ridge", (REGRESSION,), "standardize", {"alpha2": 1.0, "max_iter": 50},
           {"alpha2": [1.0, 100.0, 1000.0]}),
    Family("lasso", (REGRESSION,), "standardize", {"alpha1": 1e-4, "tol": 1e-3, "max_iter": 1000},
           {"alpha1": [1e-1, 1e-2, 1e-3, 1e-4], "tol": [1e-3, 1e-4]}),
    Family("enet", (REGRESSION,), "standardize",
           {"alpha": 1e-4, "l1_ratio": 0.5, "tol": 1e-4, "max_iter": 10000},
           {"alpha": [1e-1, 1e-2, 1e-3, 1e-4], "l1_ratio": [0.1, 0.5, 1.0]}),
    Family("huber", (REGRESSION,), "standardize",
           {"alpha1": 1e-4, "tol": 1e-4, "max_iter": 50, "epsilon": 1.35},
           {"alpha1": [1e-1, 1e-2, 1e-3, 1e-4], "tol": [1e-3, 1e-4, 1e-5]}),
    Family("poly", (REGRESSION,), "standardize", {"alpha2": 1e-6},
           {"alpha2": [1e-6, 1e-3, 1.0]}),
    Family("logistic", (CLASSIFICATION,), "standardize", {"alpha2": 0.0, "tol": 1e-7, "max_iter": 1000},
           {"tol": [1e-5, 1e-6, 1e-7], "max_iter": [100, 300, 1000]}),
    Family("kridge", (REGRESSION,), "standardize",
           {"alpha": 1e-4, "lam": 1.0, "max_rows": 20000, "sample_rows": None},
           {"alpha": [1e-2, 1e-3, 1e-4], "lam": [1.0, 2.0, 3.0]}, scale_target=True),
    Family("bayes-ridge", (REGRESSION,), "standardize", {"max_iter": 100, "tol": 1e-4},
           {"max_iter": [100, 200, 300], "tol": [1e-2, 1e-3, 1e-4]}),
    Family("gp", (REGRESSION,), "standardize",
           {"lam": 1.0, "noise": 1e-4, "max_rows": 20000, "sample_rows": None},
           {"lam": [0.5, 1.0, 2.0], "noise": [1e-6, 1e-4]}, scale_target=True),
    Family("nb", BOTH, "standardize", {"smoothing": 1e-9, "n_bins": 20},
           {"smoothing": [1e-7, 1e-8, 1e-9]}),
    Family("lda", (CLASSIFICATION,), "standardize", {"tol": 1e-4}, {"tol": [1e-4]}),
    Family("qda", (CLASSIFICATION,), "standardize", {"tol": 1e-4}, {"tol": [1e-3, 1e-4, 1e-5]}),
    Family("dt", BOTH, "identity", {"max_depth": None, "max_features": 5, "min_samples_split": 5},
           {"max_depth": [2, 3, None], "max_features": [3, 4, 5], "min_samples_split": [5, 3, 4]}),
    Family("bagging", BOTH, "identity", {"n_trees": 100, "bootstrap": True, "max_features": 5},
           {"n_trees": [100, 200, 500], "bootstrap": [True, False], "max_features": [3, 4, 5]}),
    Family("rf", BOTH, "identity",
           {"n_trees": 500, "max_depth": None, "max_features": 4, "min_samples_split": 2,
            "bootstrap": False},
           {"max_depth": [2, 3, None], "n_trees": [250, 500, 1000], "bootstrap": [True, False],
            "max_features": [3, 4, 5], "min_samples_split": [2, 3, 4]}),
    Family("adaboost", (REGRESSION,), "identity",
           {"n_trees": 100, "loss": "square", "learning_rate": 1.0, "max_depth": 3},
           {"n_trees": [100, 200, 300], "loss": ["linear", "square", "exponential"],
            "learning_rate": [0.1, 0.5, 0.75, 1.0]}),
    Family("dt-adaboost", (REGRESSION,), "identity",
           {"n_trees": 100, "loss": "square", "learning_rate": 1.0, "max_depth": None,
            "max_features": 5, "min_samples_split": 5},
           {"n_trees": [100, 200, 500], "loss": ["linear", "square", "exponential"],
            "learning_rate": [0.1, 0.5, 1.0]}),
    Family("gbm", (REGRESSION,), "identity",
           {"n_trees": 100, "subsample": 0.5, "learning_rate": 0.1, "max_depth": 3},
           {"n_trees": [100, 200, 500], "subsample": [0.5, 0.7, 0.8],
            "learning_rate": [0.1, 0.25, 0.5]}),
    Family("mlp", BOTH, "standardize",
           {"hidden": [200], "activation": "relu", "alpha": 1e-4, "learning_rate": 1e-3,
            "max_iter": 200, "batch_size": 256, "tol": 1e-4, "n_iter_no_change": 10},
           {"hidden": [[5], [25], [50], [100], [200], [100, 100]],
            "activation": ["relu", "tanh", "logistic"],
            "alpha": [1e-1, 1e-2, 1e-4], "learning_rate": [1e-1, 1e-3]}),
]}

NAMES = tuple(FAMILIES)


def get_family(name):
    try:
        return FAMILIES[name]
    except KeyError:
        raise InvalidArgument(f"unknown emulator {name!r}; valid names: {', '.join(NAMES)}") from None


@dataclass(frozen=True, eq=False)
class BinnedNbRegressor:
    """Gaussian naive Bayes over a binned target; predicts the posterior-mean bin center."""
    nb: bayes.GaussianNbModel
    centers: np.ndarray

    @property
    def n_features(self):
        return self.nb.n_features

    def predict(self, X):
        P = self.nb.predict_proba(X)
        return P @ self.centers[self.nb.classes]


def fit_binned_nb(X, y, smoothing=1e-9, n_bins=20):
    y = np.asarray(y, dtype=float)
    lo, hi = float(y.min()), float(y.max())
    if hi <= lo:
        raise InvalidArgument("cannot bin a constant target")
    edges = np.linspace(lo, hi, n_bins + 1)
    codes = np.clip(np.searchsorted(edges, y, side="right") - 1, 0, n_bins - 1)
    centers = 0.5 * (edges[:-1] + edges[1:])
    return BinnedNbRegressor(bayes.fit_gaussian_nb(X, codes, smoothing), centers)


def _tree_cfg(p, task, seed, **defaults):
    keys = ("max_depth", "max_features", "min_samples_split", "min_samples_leaf")
    kw = {k: p[k] for k in keys if k in p}
    for k, v in defaults.items():
        kw.setdefault(k, v)
    if kw.get("max_features") is not None:
        kw["max_features"] = int(kw["max_features"])
    return TreeConfig(task=task, seed=int(seed), **kw)


def _cap_features(p, n_features):
    if p.get("max_features") is not None and int(p["max_features"]) > n_features:
        p = dict(p, max_features=n_features)
    return p


def _fit_inner(name, X, y, task, p, seed, n_jobs):
    if name in ("lsqr", "ridge", "lasso", "enet", "huber", "poly"):
        cfg = dict(fit_intercept=bool(p.get("fit_intercept", True)),
                   max_iter=int(p.get("max_iter", 1000)), tol=float(p.get("tol", 1e-4)))
        if name == "enet":
            lc = linear.LinearConfig.elastic_net(float(p["alpha"]), float(p["l1_ratio"]), **cfg)
        else:
            lc = linear.LinearConfig(alpha1=float(p.get("alpha1", 0.0)) if name in ("lasso", "huber") else 0.0,
                                     alpha2=float(p.get("alpha2", 0.0)) if name in ("ridge", "poly") else 0.0,
                                     loss="huber" if name == "huber" else "squared",
                                     epsilon=float(p.get("epsilon", 1.35)), **cfg)
        if name == "poly":
            return linear.fit_polynomial(X, y, lc)
        return linear.fit_linear(X, y, lc)
    if name == "logistic":
        lc = linear.LinearConfig(alpha2=float(p.get("alpha2", 0.0)), tol=float(p["tol"]),
                                 max_iter=int(p["max_iter"]))
        return linear.fit_logistic(X, y, lc, seed=seed)
    if name == "kridge":
        return linear.fit_kernel_ridge(X, y, float(p["alpha"]), float(p["lam"]), int(p["max_rows"]))
    if name == "bayes-ridge":
        return bayes.fit_bayesian_ridge(X, y, int(p["max_iter"]), float(p["tol"]))
    if name == "gp":
        return bayes.gp_fit(X, y, float(p["lam"]), float(p["noise"]), int(p["max_rows"]))
    if name == "nb":
        if task == CLASSIFICATION:
            return bayes.fit_gaussian_nb(X, y, float(p["smoothing"]))
        return fit_binned_nb(X, y, float(p["smoothing"]), int(p["n_bins"]))
    if name in ("lda", "qda"):
        return bayes.fit_discriminant(X, y, name, float(p["tol"]))
    p = _cap_features(p, X.shape[1])
    if name == "dt":
        return fit_tree(X, y, _tree_cfg(p, task, seed))
    if name == "bagging":
        return ensemble.fit_bagging(X, y, int(p["n_trees"]), _tree_cfg(p, task, seed), seed,
                                    bool(p["bootstrap"]), n_jobs)
    if name == "rf":
        return ensemble.fit_random_forest(X, y, int(p["n_trees"]), _tree_cfg(p, task, seed), seed,
                                          bool(p["bootstrap"]), n_jobs)
    if name in ("adaboost", "dt-adaboost"):
        return ensemble.fit_adaboost_r2(X, y, int(p["n_trees"]), _tree_cfg(p, task, seed),
                                        float(p["learning_rate"]), str(p["loss"]), seed, kind=name)
    if name == "gbm":
        return ensemble.fit_gbm(X, y, int(p["n_trees"]), float(p["learning_rate"]),
                                float(p["subsample"]), _tree_cfg(p, task, seed), seed)
    if name == "mlp":
        mc = mlp.MlpConfig(hidden=tuple(int(h) for h in np.atleast_1d(p["hidden"])),
                           activation=str(p["activation"]), alpha=float(p["alpha"]),
                           learning_rate=float(p["learning_rate"]), max_iter=int(p["max_iter"]),
                           batch_size=int(p["batch_size"]), tol=float(p["tol"]),
                           n_iter_no_change=int(p["n_iter_no_change"]), seed=int(seed))
        return mlp.train(X, y, mc, task)
    raise InvalidArgument(f"unknown emulator {name!r}")


@dataclass(frozen=True, eq=False)
class EmulatorModel:
    name: str
    task: str
    target: str
    params: dict
    seed: int
    preprocessor: Preprocessor
    inner: object
    y_shift: float = 0.0
    y_scale: float = 1.0
    info: dict = field(default_factory=dict)

    @property
    def n_features(self):
        w = self.preprocessor.stats.get("width")
        if w is not None:
            return int(w[0])
        return next(iter(self.preprocessor.stats.values())).size

    def _features(self, X):
        X = np.asarray(X, dtype=float)
        if X.ndim == 1:
            X = X[None, :]
        if X.shape[1] != self.n_features:
            raise InvalidArgument(f"model expects {self.n_features} features, got {X.shape[1]}")
        return self.preprocessor.transform(X)

    def predict(self, X):
        out = self.inner.predict(self._features(X))
        if self.task == REGRESSION:
            return np.asarray(out, dtype=float) * self.y_scale + self.y_shift
        return out

    def predict_proba(self, X):
        if self.task != CLASSIFICATION:
            raise InvalidArgument("probabilities are only defined for classifiers")
        return self.inner.predict_proba(self._features(X))


def resolve_params(name, params=None):
    fam = get_family(name)
    p = dict(fam.defaults)
    for k, v in (params or {}).items():
        if k not in fam.defaults and k not in fam.search_grid:
            raise InvalidArgument(f"emulator {name!r} has no hyperparameter {k!r}; "
                                  f"known: {', '.join(sorted(fam.defaults))}")
        p[k] = v
    return p


def fit_emulator(name, data, params=None, seed=0, n_jobs=1, y=None, task=None, target=None):
    """Fit family ``name`` on a :class:`Dataset` (or on ``data``, ``y`` arrays)."""
    fam = get_family(name)
    if isinstance(data, Dataset):
        X, yv, task, target = data.X, data.y, data.task, data.target
    else:
        X, yv = np.asarray(data, dtype=float), np.asarray(y)
        task = task or REGRESSION
        target = target or "y"
    if task not in fam.tasks:
        raise InvalidArgument(f"emulator {name!r} does not support {task}; it supports {', '.join(fam.tasks)}")
    p = resolve_params(name, params)
    if p.get("sample_rows") is not None and X.shape[0] > int(p["sample_rows"]):
        # dense-kernel families: fit on a seeded row sample
        rng = np.random.default_rng(seed)
        keep = np.sort(rng.choice(X.shape[0], int(p["sample_rows"]), replace=False))
        X, yv = X[keep], yv[keep]
    pre = Preprocessor(fam.preprocessing)
    Z = pre.fit_transform(X)
    shift, scale = 0.0, 1.0
    if task == REGRESSION:
        yv = yv.astype(float)
        if fam.scale_target:
            shift = float(yv.mean())
            sd = float(yv.std())
            scale = sd if sd > 1e-12 else 1.0
            yv = (yv - shift) / scale
    inner = _fit_inner(name, Z, yv, task, p, seed, n_jobs)
    return EmulatorModel(name, task, target, p, int(seed), pre, inner, shift, scale)
