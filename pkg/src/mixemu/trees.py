"""CART decision trees stored as flat, index-linked node arrays.

Splits minimize weighted child impurity (squared error or Gini).  Candidate
thresholds are midpoints between consecutive distinct values; a row goes left
when ``x[j] <= threshold``.  Ties go to the lower feature index, then the lower
threshold.
"""

from dataclasses import dataclass

import numba
import numpy as np

from ._util import as_2d, check_xy
from .errors import InvalidArgument

LEAF = -1
_REL_TIE = 1e-12


@dataclass(frozen=True)
class TreeConfig:
    max_depth: int | None = None
    max_features: int | None = None     # None means all features
    min_samples_split: int = 2
    min_samples_leaf: int = 1
    task: str = "regression"            # or "classification"
    seed: int = 0

    def __post_init__(self):
        if self.min_samples_split < 2:
            raise InvalidArgument("min_samples_split must be >= 2")
        if self.min_samples_leaf < 1:
            raise InvalidArgument("min_samples_leaf must be >= 1")
        if self.max_depth is not None and self.max_depth < 0:
            raise InvalidArgument("max_depth must be >= 0")
        if self.max_features is not None and self.max_features < 1:
            raise InvalidArgument("max_features must be >= 1")
        if self.task not in ("regression", "classification"):
            raise InvalidArgument(f"unknown task {self.task!r}")

    def replace(self, **kw):
        d = dict(self.__dict__)
        d.update(kw)
        return TreeConfig(**d)


@dataclass(frozen=True, eq=False)
class Tree:
    feature: np.ndarray     # int64, LEAF for leaves
    threshold: np.ndarray
    left: np.ndarray
    right: np.ndarray
    value: np.ndarray       # (n_nodes, 1) mean, or (n_nodes, K) class fractions
    n_samples: np.ndarray
    impurity: np.ndarray
    n_features: int
    classes: np.ndarray | None = None

    @property
    def n_nodes(self):
        return self.feature.shape[0]

    @property
    def depth(self):
        d = np.zeros(self.n_nodes, dtype=np.int64)
        for i in range(self.n_nodes):
            if self.feature[i] != LEAF:
                d[self.left[i]] = d[self.right[i]] = d[i] + 1
        return int(d.max())

    def apply(self, X):
        X = as_2d(X, self.n_features)
        return _apply(X, self.feature, self.threshold, self.left, self.right)

    def predict_value(self, X):
        return self.value[self.apply(X)]

    def predict(self, X):
        v = self.predict_value(X)
        if self.classes is None:
            return v[:, 0]
        return self.classes[np.argmax(v, axis=1)]

    def predict_proba(self, X):
        return self.predict_value(X)


@numba.njit(cache=True, nogil=True)
def _apply(X, feature, threshold, left, right):
    out = np.empty(X.shape[0], dtype=np.int64)
    for i in range(X.shape[0]):
        node = 0
        while feature[node] >= 0:
            if X[i, feature[node]] <= threshold[node]:
                node = left[node]
            else:
                node = right[node]
        out[i] = node
    return out


@numba.njit(cache=True, nogil=True)
def _apply_packed(X, feature, threshold, left, right, roots):
    """Leaf index of every row in every tree of a packed forest, shape (M, n)."""
    out = np.empty((roots.shape[0], X.shape[0]), dtype=np.int64)
    for m in range(roots.shape[0]):
        for i in range(X.shape[0]):
            node = roots[m]
            while feature[node] >= 0:
                if X[i, feature[node]] <= threshold[node]:
                    node = left[node]
                else:
                    node = right[node]
            out[m, i] = node
    return out


def pack_trees(trees):
    """Concatenate trees into one node array set with child links offset per tree."""
    sizes = np.array([t.n_nodes for t in trees], dtype=np.int64)
    roots = np.concatenate([[0], np.cumsum(sizes)[:-1]]).astype(np.int64)
    off = np.repeat(roots, sizes)
    leaf = np.concatenate([t.feature for t in trees]) == LEAF
    left = np.where(leaf, LEAF, np.concatenate([t.left for t in trees]) + off)
    right = np.where(leaf, LEAF, np.concatenate([t.right for t in trees]) + off)
    return (np.ascontiguousarray(np.concatenate([t.feature for t in trees]), dtype=np.int64),
            np.ascontiguousarray(np.concatenate([t.threshold for t in trees]), dtype=float),
            left.astype(np.int64), right.astype(np.int64), roots,
            np.concatenate([t.value for t in trees]))


@numba.njit(cache=True)
def _node_stats(y, order, start, end, n_classes):
    """(value vector, impurity) for rows order[start:end]."""
    m = end - start
    if n_classes == 0:
        s = 0.0
        lo = np.inf
        hi = -np.inf
        for i in range(start, end):
            v = y[order[i]]
            s += v
            lo = min(lo, v)
            hi = max(hi, v)
        mean = s / m
        sse = 0.0
        if hi > lo:
            for i in range(start, end):
                d = y[order[i]] - mean
                sse += d * d
        val = np.empty(1)
        val[0] = mean
        return val, sse / m
    counts = np.zeros(n_classes)
    for i in range(start, end):
        counts[int(y[order[i]])] += 1.0
    frac = counts / m
    gini = 0.0
    for k in range(n_classes):
        gini += frac[k] * (1.0 - frac[k])
    return frac, gini


@numba.njit(cache=True)
def _better(s, best_s, best_f):
    return best_f < 0 or s > best_s + _REL_TIE * abs(best_s)


@numba.njit(cache=True)
def _midpoint(a, b):
    t = 0.5 * (a + b)
    return a if t >= b else t


@numba.njit(cache=True)
def _scan_sorted(X, y, order, start, end, j, n_classes, min_leaf, best_f, best_t, best_s):
    m = end - start
    vals = np.empty(m)
    for i in range(m):
        vals[i] = X[order[start + i], j]
    perm = np.argsort(vals, kind="mergesort")
    if vals[perm[0]] == vals[perm[m - 1]]:
        return best_f, best_t, best_s
    ys = np.empty(m)
    for i in range(m):
        ys[i] = y[order[start + perm[i]]]
    nk = max(n_classes, 1)
    cl = np.zeros(nk)
    ct = np.zeros(nk)
    tot = 0.0
    for i in range(m):
        if n_classes == 0:
            tot += ys[i]
        else:
            ct[int(ys[i])] += 1.0
    sl = 0.0
    for i in range(m - 1):
        if n_classes == 0:
            sl += ys[i]
        else:
            cl[int(ys[i])] += 1.0
        nl = i + 1
        nr = m - nl
        a = vals[perm[i]]
        b = vals[perm[i + 1]]
        if a == b or nl < min_leaf or nr < min_leaf:
            continue
        s = _score(sl, tot, cl, ct, nl, nr, n_classes)
        if _better(s, best_s, best_f):
            best_s = s
            best_f = j
            best_t = _midpoint(a, b)
    return best_f, best_t, best_s


@numba.njit(cache=True)
def _scan_counts(codes, uvals, U, y, order, start, end, j, n_classes, min_leaf,
                 cnt, acc, acck, best_f, best_t, best_s):
    """Same search as _scan_sorted, by accumulating per distinct value."""
    m = end - start
    nk = max(n_classes, 1)
    for c in range(U):
        cnt[c] = 0.0
        acc[c] = 0.0
        for k in range(nk):
            acck[c, k] = 0.0
    for i in range(start, end):
        r = order[i]
        c = codes[r, j]
        cnt[c] += 1.0
        if n_classes == 0:
            acc[c] += y[r]
        else:
            acck[c, int(y[r])] += 1.0
    cl = np.zeros(nk)
    ct = np.zeros(nk)
    tot = 0.0
    for c in range(U):
        if n_classes == 0:
            tot += acc[c]
        else:
            for k in range(n_classes):
                ct[k] += acck[c, k]
    sl = 0.0
    nl = 0
    prev = -1
    for c in range(U):
        if cnt[c] == 0.0:
            continue
        if prev >= 0:
            nr = m - nl
            if nl >= min_leaf and nr >= min_leaf:
                s = _score(sl, tot, cl, ct, nl, nr, n_classes)
                if _better(s, best_s, best_f):
                    best_s = s
                    best_f = j
                    best_t = _midpoint(uvals[j, prev], uvals[j, c])
        nl += int(cnt[c])
        if n_classes == 0:
            sl += acc[c]
        else:
            for k in range(n_classes):
                cl[k] += acck[c, k]
        prev = c
    return best_f, best_t, best_s


@numba.njit(cache=True)
def _score(sl, tot, cl, ct, nl, nr, n_classes):
    """Quantity maximized by the best split.

    sum_child S^2/n for squared error, sum_child sum_k n_k^2/n for Gini; both
    are affine in the weighted child impurity with negative slope.
    """
    if n_classes == 0:
        sr = tot - sl
        return sl * sl / nl + sr * sr / nr
    ql = 0.0
    qr = 0.0
    for k in range(n_classes):
        ql += cl[k] * cl[k]
        d = ct[k] - cl[k]
        qr += d * d
    return ql / nl + qr / nr


@numba.njit(cache=True)
def _best_split(X, codes, uvals, ucount, y, order, start, end, feats, n_classes, min_leaf,
                cnt, acc, acck):
    """Best (feature, threshold, score) over candidate features."""
    m = end - start
    best_f = -1
    best_t = 0.0
    best_s = -np.inf
    for fi in range(feats.shape[0]):
        j = feats[fi]
        U = ucount[j]
        if U <= 1:
            continue
        if U <= 2 * m:
            best_f, best_t, best_s = _scan_counts(codes, uvals, U, y, order, start, end, j, n_classes,
                                                  min_leaf, cnt, acc, acck, best_f, best_t, best_s)
        else:
            best_f, best_t, best_s = _scan_sorted(X, y, order, start, end, j, n_classes, min_leaf,
                                                  best_f, best_t, best_s)
    return best_f, best_t, best_s


@numba.njit(cache=True)
def _choose_features(p, k):
    idx = np.arange(p)
    if k >= p:
        return idx
    for i in range(k):
        r = i + np.random.randint(p - i)
        tmp = idx[i]
        idx[i] = idx[r]
        idx[r] = tmp
    return np.sort(idx[:k])


@numba.njit(cache=True)
def _build(X, codes, uvals, ucount, y, rows, n_classes, max_depth, max_features, min_split,
           min_leaf, seed):
    np.random.seed(seed)
    umax = uvals.shape[1]
    cnt = np.empty(umax)
    acc = np.empty(umax)
    acck = np.empty((umax, max(n_classes, 1)))
    n = rows.shape[0]
    p = X.shape[1]
    cap = 2 * n + 1
    nv = 1 if n_classes == 0 else n_classes
    feature = np.full(cap, -1, dtype=np.int64)
    threshold = np.zeros(cap)
    left = np.full(cap, -1, dtype=np.int64)
    right = np.full(cap, -1, dtype=np.int64)
    value = np.zeros((cap, nv))
    nsamp = np.zeros(cap, dtype=np.int64)
    imp = np.zeros(cap)
    order = rows.copy()
    stack = np.empty((cap, 4), dtype=np.int64)   # node, start, end, depth
    stack[0, 0] = 0
    stack[0, 1] = 0
    stack[0, 2] = n
    stack[0, 3] = 0
    top = 1
    n_nodes = 1
    while top > 0:
        top -= 1
        node = stack[top, 0]
        start = stack[top, 1]
        end = stack[top, 2]
        depth = stack[top, 3]
        val, im = _node_stats(y, order, start, end, n_classes)
        value[node] = val
        imp[node] = im
        m = end - start
        nsamp[node] = m
        if im <= 0.0 or m < min_split or m < 2 * min_leaf or (max_depth >= 0 and depth >= max_depth):
            continue
        feats = _choose_features(p, max_features)
        f, t, s = _best_split(X, codes, uvals, ucount, y, order, start, end, feats, n_classes,
                              min_leaf, cnt, acc, acck)
        if f < 0:
            continue
        # partition rows in place: left block keeps x <= t
        i = start
        j = end - 1
        while i <= j:
            if X[order[i], f] <= t:
                i += 1
            else:
                tmp = order[i]
                order[i] = order[j]
                order[j] = tmp
                j -= 1
        feature[node] = f
        threshold[node] = t
        left[node] = n_nodes
        right[node] = n_nodes + 1
        # push right first so the left subtree is numbered depth-first
        stack[top, 0] = n_nodes + 1
        stack[top, 1] = i
        stack[top, 2] = end
        stack[top, 3] = depth + 1
        stack[top + 1, 0] = n_nodes
        stack[top + 1, 1] = start
        stack[top + 1, 2] = i
        stack[top + 1, 3] = depth + 1
        top += 2
        n_nodes += 2
    # copies, so the oversized scratch buffers are released
    return (feature[:n_nodes].copy(), threshold[:n_nodes].copy(), left[:n_nodes].copy(),
            right[:n_nodes].copy(), value[:n_nodes].copy(), nsamp[:n_nodes].copy(),
            imp[:n_nodes].copy())


def canonical_order(X, y):
    """Row order that depends only on the multiset of rows, not their input order."""
    keys = [y] + [X[:, j] for j in range(X.shape[1] - 1, -1, -1)]
    return np.lexsort(keys)


def _encode(y, task, classes=None):
    if task == "regression":
        y = np.asarray(y, dtype=float)
        if not np.all(np.isfinite(y)):
            raise InvalidArgument("targets contain non-finite values")
        return y, None, 0
    classes = np.unique(y) if classes is None else np.asarray(classes)
    codes = np.searchsorted(classes, y)
    if np.any(codes >= classes.size) or np.any(classes[np.minimum(codes, classes.size - 1)] != y):
        raise InvalidArgument("labels outside the class list")
    return codes.astype(float), classes, classes.size


def value_codes(X):
    """Per-feature sorted distinct values (padded) and each entry's index into them."""
    X = np.asarray(X, dtype=float)
    n, p = X.shape
    codes = np.empty((n, p), dtype=np.int64)
    uniq = []
    for j in range(p):
        u, inv = np.unique(X[:, j], return_inverse=True)
        uniq.append(u)
        codes[:, j] = inv.ravel()
    ucount = np.array([u.size for u in uniq], dtype=np.int64)
    uvals = np.zeros((p, max(int(ucount.max()), 1)))
    for j, u in enumerate(uniq):
        uvals[j, : u.size] = u
    return codes, uvals, ucount


def fit_tree(X, y, cfg=TreeConfig(), rows=None, classes=None, canonical=True, codes=None):
    """Grow one tree.  ``rows`` (with repeats allowed) selects a resample of X.

    ``codes`` is the output of :func:`value_codes` for X; ensembles pass it
    to avoid recomputing it for every member.
    """
    X, y = check_xy(X, y)
    if canonical:
        perm = canonical_order(X, np.asarray(y, dtype=float) if cfg.task == "regression"
                               else np.unique(y, return_inverse=True)[1])
        X, y = X[perm], np.asarray(y)[perm]
        if rows is not None:
            inv = np.empty_like(perm)
            inv[perm] = np.arange(perm.size)
            rows = inv[np.asarray(rows)]
    yc, classes, K = _encode(y, cfg.task, classes)
    X = np.ascontiguousarray(X)
    p = X.shape[1]
    mf = p if cfg.max_features is None else cfg.max_features
    if mf > p:
        raise InvalidArgument(f"max_features={mf} exceeds feature count {p}")
    if rows is None:
        rows = np.arange(X.shape[0], dtype=np.int64)
    md = -1 if cfg.max_depth is None else cfg.max_depth
    if codes is None or canonical:
        codes = value_codes(X)
    arrs = _build(X, *codes, yc, np.asarray(rows, dtype=np.int64), K, md, mf,
                  cfg.min_samples_split, cfg.min_samples_leaf, cfg.seed % (2**32))
    return Tree(*arrs, n_features=p, classes=classes)


def gini(labels):
    _, counts = np.unique(labels, return_counts=True)
    f = counts / counts.sum()
    return float(np.sum(f * (1 - f)))


def split_impurity(x, y, threshold, task="regression"):
    """Weighted child impurity G(Q, s) of one split, by direct evaluation."""
    y = np.asarray(y)
    mask = x <= threshold
    tot = 0.0
    for part in (y[mask], y[~mask]):
        if part.size:
            imp = float(np.var(part)) if task == "regression" else gini(part)
            tot += part.size * imp
    return tot / y.size
