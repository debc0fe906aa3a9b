"""Parameter sweeps, dataset assembly, preprocessing, partitions, folds, grid search."""

import csv
import io
import itertools
import json
import logging
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

from .errors import EmptyDataset, InvalidArgument, NotFitted
from .pde import (DispersionParams, FlowParams, ReactionMode, ReactionParams, SimulationConfig,
                  solve)
from .qoi import normalized_qois

log = logging.getLogger(__name__)

FEATURES = ("v0", "aniso_ratio", "d_m", "kfl", "t_osc", "time")
QOI_TARGETS = ("cbar_A", "cbar_B", "cbar_C", "csq_A", "csq_B", "csq_C", "var_A", "var_B", "var_C")
CLASS_TARGET = "class_C"
TARGETS = QOI_TARGETS + (CLASS_TARGET,)
CSV_HEADER = ("sim_id",) + FEATURES + TARGETS
MANIFEST = "manifest.txt"
CAMPAIGN_CSV = "campaign.csv"


def fmt(x):
    """Shortest round-trip text for a float; integers print without a decimal point."""
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    return repr(float(x))


# ---------------------------------------------------------------------------
# grid


@dataclass(frozen=True)
class GridSpec:
    v0: tuple = (0.1, 0.5, 1.0)
    aniso_ratio: tuple = (1.0, 10.0, 100.0)
    d_m: tuple = (1e-3, 1e-2)
    kappa_f_L: tuple = (1, 2, 3)
    t_osc: tuple = (0.1, 0.5)
    mesh_n_side: int = 41
    dt: float = 0.005
    n_steps: int = 200
    alpha_l: float = 1.0
    reaction: str = "instantaneous"
    k_ab: float = 0.0

    def __post_init__(self):
        for name in ("v0", "aniso_ratio", "d_m", "kappa_f_L", "t_osc"):
            vals = tuple(getattr(self, name))
            if not vals:
                raise InvalidArgument(f"grid list {name!r} is empty")
            object.__setattr__(self, name, vals)
        if min(self.aniso_ratio) < 1:
            raise InvalidArgument("anisotropy ratios must be >= 1")

    @property
    def size(self):
        return (len(self.v0) * len(self.aniso_ratio) * len(self.d_m) * len(self.kappa_f_L)
                * len(self.t_osc))


FULL_GRID = GridSpec(
    v0=(1e-4, 1e-3, 1e-2, 1e-1, 1.0),
    aniso_ratio=(1.0, 10.0, 100.0, 1000.0, 10000.0),
    d_m=(1e-8, 1e-3, 1e-2, 1e-1),
    kappa_f_L=(1, 2, 3, 4, 5),
    t_osc=(1e-4, 2e-4, 3e-4, 4e-4, 5e-4),
    mesh_n_side=81, dt=1e-3, n_steps=1000,
)
DESK_GRID = GridSpec()


def enumerate_grid(spec):
    """Cartesian product in lexicographic order (v0 slowest, t_osc fastest)."""
    reaction = ReactionParams(ReactionMode(spec.reaction), spec.k_ab)
    out = []
    for v0, ratio, dm, kfl, T in itertools.product(spec.v0, spec.aniso_ratio, spec.d_m,
                                                   spec.kappa_f_L, spec.t_osc):
        out.append(SimulationConfig(
            flow=FlowParams(float(v0), int(kfl), float(T)),
            dispersion=DispersionParams.from_ratio(float(ratio), float(dm), spec.alpha_l),
            reaction=reaction, mesh_n_side=spec.mesh_n_side, dt=spec.dt, n_steps=spec.n_steps))
    return out


def feature_values(config):
    d = config.dispersion
    f = config.flow
    return (f.v0, d.aniso_ratio, d.d_m, f.kappa_f_L, f.t_osc)


def features_for_config(config, times):
    """Feature rows for one simulation; time is normalized by the horizon."""
    times = np.asarray(times, dtype=float)
    X = np.empty((times.size, len(FEATURES)))
    X[:, :5] = feature_values(config)
    X[:, 5] = times / config.horizon
    return X


# ---------------------------------------------------------------------------
# running


@dataclass
class CampaignResult:
    output_dir: Path | None
    configs: list
    status: dict                  # sim_id -> "complete" | "incomplete"
    rows: dict                    # sim_id -> list of CSV rows (complete sims only)
    new_solves: int = 0

    @property
    def completed(self):
        return [i for i in sorted(self.status) if self.status[i] == "complete"]

    @property
    def incomplete(self):
        return [i for i in sorted(self.status) if self.status[i] != "complete"]

    def table(self):
        return rows_to_table([r for i in self.completed for r in self.rows[i]])


def qoi_rows(sim_id, config, q):
    X = features_for_config(config, q.times)
    Y = np.array([q.series(t) for t in QOI_TARGETS]).T
    rows = []
    for k in range(q.times.size):
        v0, ratio, dm, kfl, T, t = X[k]
        rows.append([sim_id, float(v0), float(ratio), float(dm), int(kfl), float(T), float(t)]
                    + [float(v) for v in Y[k]] + [int(q.mixing_class[k])])
    return rows


def rows_to_csv(rows):
    buf = io.StringIO()
    buf.write(",".join(CSV_HEADER) + "\n")
    for r in rows:
        buf.write(",".join(fmt(v) for v in r) + "\n")
    return buf.getvalue()


def _atomic_write(path, text):
    path = Path(path)
    tmp = path.with_name(path.name + ".tmp")
    tmp.write_text(text)
    os.replace(tmp, path)


def _sim_paths(out, i):
    base = Path(out) / "sims" / f"sim_{i:05d}"
    return base.with_suffix(".csv"), base.with_suffix(".incomplete"), base.with_suffix(".json")


def _run_one(i, cfg_dict, save_every):
    cfg = SimulationConfig.from_dict(cfg_dict)
    traj = solve(cfg, save_every)
    if not traj.complete:
        return i, "incomplete", None, traj.n_frames
    q = normalized_qois(traj, sim_id=i)
    return i, "complete", qoi_rows(i, cfg, q), traj.n_frames


def _load_existing(out, i, cfg, save_every):
    """Rows of a previously finished sim, 'incomplete', or None if it must be (re)run."""
    csv_path, bad_path, meta_path = _sim_paths(out, i)
    key = {"config_hash": cfg.config_hash(), "save_every": int(save_every)}
    if bad_path.exists():
        try:
            meta = json.loads(bad_path.read_text())
        except ValueError:
            return None
        return "incomplete" if all(meta.get(k) == v for k, v in key.items()) else None
    if not (csv_path.exists() and meta_path.exists()):
        return None
    try:
        meta = json.loads(meta_path.read_text())
        tab = read_campaign_csv(csv_path)
    except (ValueError, OSError):
        return None
    if not all(meta.get(k) == v for k, v in key.items()):
        return None
    if tab["sim_id"].size != meta.get("frames") or np.any(tab["sim_id"] != i):
        return None
    return table_to_rows(tab)


def _write_manifest(out, configs, status, n_frames):
    lines = ["# sim_id\tstatus\tframes\tconfig_hash\tv0\taniso_ratio\td_m\tkfl\tt_osc"]
    for i in sorted(status):
        cfg = configs[i]
        vals = "\t".join(fmt(v) for v in feature_values(cfg))
        lines.append(f"{i}\t{status[i]}\t{n_frames.get(i, 0)}\t{cfg.config_hash()}\t{vals}")
    _atomic_write(Path(out) / MANIFEST, "\n".join(lines) + "\n")


def run_campaign(configs, parallelism=1, output_dir=None, save_every=1):
    """Solve every config, reusing valid outputs already in ``output_dir``.

    Per-simulation CSVs go to ``sims/``; failed runs leave a ``.incomplete``
    marker so a rerun skips them too.  The manifest is rewritten after every
    finished simulation, so an I/O failure leaves it describing what is on disk.
    """
    configs = list(configs)
    status, rows, n_frames = {}, {}, {}
    todo = []
    out = Path(output_dir) if output_dir is not None else None
    if out is not None:
        (out / "sims").mkdir(parents=True, exist_ok=True)
    for i, cfg in enumerate(configs):
        prev = _load_existing(out, i, cfg, save_every) if out is not None else None
        if prev is None:
            todo.append(i)
        elif prev == "incomplete":
            status[i] = "incomplete"
        else:
            status[i] = "complete"
            rows[i] = prev
            n_frames[i] = len(prev)

    def record(i, st, r, nf):
        status[i] = st
        n_frames[i] = nf
        if st == "complete":
            rows[i] = r
        if out is not None:
            csv_path, bad_path, meta_path = _sim_paths(out, i)
            meta = {"config_hash": configs[i].config_hash(), "save_every": int(save_every),
                    "frames": nf}
            if st == "complete":
                _atomic_write(csv_path, rows_to_csv(r))
                _atomic_write(meta_path, json.dumps(meta, sort_keys=True) + "\n")
            else:
                _atomic_write(bad_path, json.dumps(meta, sort_keys=True) + "\n")
                log.warning("simulation %d did not complete", i)
            _write_manifest(out, configs, status, n_frames)

    args = [(i, configs[i].to_dict(), save_every) for i in todo]
    if parallelism > 1 and len(todo) > 1:
        with ProcessPoolExecutor(max_workers=parallelism) as ex:
            for res in ex.map(_run_one, *zip(*args)):
                record(*res)
    else:
        for a in args:
            record(*_run_one(*a))
    result = CampaignResult(out, configs, status, rows, len(todo))
    if out is not None:
        _write_manifest(out, configs, status, n_frames)
        _atomic_write(out / CAMPAIGN_CSV, rows_to_csv([r for i in result.completed for r in rows[i]]))
    return result


def read_manifest(path):
    out = {}
    for line in Path(path).read_text().splitlines():
        if not line or line.startswith("#"):
            continue
        parts = line.split("\t")
        out[int(parts[0])] = parts[1]
    return out


# ---------------------------------------------------------------------------
# tables and datasets


def read_campaign_csv(path):
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = tuple(next(reader))
        if header != CSV_HEADER:
            raise InvalidArgument(f"{path}: unexpected header {header}")
        data = [r for r in reader if r]
    return rows_to_table([[float(v) for v in r] for r in data])


def rows_to_table(rows):
    arr = np.array(rows, dtype=float).reshape(-1, len(CSV_HEADER))
    tab = {name: arr[:, k] for k, name in enumerate(CSV_HEADER)}
    tab["sim_id"] = tab["sim_id"].astype(np.int64)
    tab[CLASS_TARGET] = tab[CLASS_TARGET].astype(np.int64)
    return tab


def table_to_rows(tab):
    n = tab["sim_id"].size
    out = []
    for k in range(n):
        row = [int(tab["sim_id"][k])]
        for name in CSV_HEADER[1:]:
            v = tab[name][k]
            row.append(int(v) if name in ("kfl", CLASS_TARGET) else float(v))
        out.append(row)
    return out


@dataclass(frozen=True, eq=False)
class Dataset:
    X: np.ndarray
    y: np.ndarray
    sim_ids: np.ndarray
    target: str
    feature_names: tuple = FEATURES
    preprocessing: str = "identity"

    @property
    def n_rows(self):
        return self.X.shape[0]

    @property
    def sims(self):
        return np.unique(self.sim_ids)

    @property
    def task(self):
        return "classification" if self.target == CLASS_TARGET else "regression"

    def subset(self, sims):
        mask = np.isin(self.sim_ids, np.asarray(sims))
        return replace(self, X=self.X[mask], y=self.y[mask], sim_ids=self.sim_ids[mask])


def assemble(source, target):
    """One row per (completed sim, saved frame).

    ``source`` may be a CampaignResult, a column table, or a campaign CSV path.
    """
    if target not in TARGETS:
        raise InvalidArgument(f"unknown target {target!r}; choose from {', '.join(TARGETS)}")
    if isinstance(source, CampaignResult):
        tab = source.table()
    elif isinstance(source, dict):
        tab = source
    else:
        tab = read_campaign_csv(source)
    if tab["sim_id"].size == 0:
        raise EmptyDataset("no completed simulations to assemble")
    X = np.column_stack([tab[c] for c in FEATURES]).astype(float)
    y = tab[target]
    if not np.all(np.isfinite(X)) or not np.all(np.isfinite(y)):
        raise InvalidArgument("dataset contains non-finite values")
    return Dataset(X, y.copy(), tab["sim_id"].copy(), target)


# ---------------------------------------------------------------------------
# preprocessing

PREPROCESSORS = ("standardize", "normalize01", "maxabs", "quadratic", "identity")


class Preprocessor:
    """Column-wise feature transform with fitted statistics."""

    def __init__(self, kind="standardize"):
        kind = kind.lower()
        if kind not in PREPROCESSORS:
            raise InvalidArgument(f"unknown preprocessor {kind!r}")
        self.kind = kind
        self.stats = None

    @property
    def fitted(self):
        return self.stats is not None

    def fit(self, X):
        X = np.asarray(X, dtype=float)
        if X.ndim != 2 or X.shape[0] == 0:
            raise EmptyDataset("cannot fit a preprocessor on an empty matrix")
        if self.kind == "standardize":
            sd = X.std(axis=0)
            self.stats = {"mean": X.mean(axis=0), "scale": np.where(sd < 1e-12, 1.0, sd)}
        elif self.kind == "normalize01":
            lo, hi = X.min(0), X.max(0)
            rng = hi - lo
            self.stats = {"min": lo, "scale": np.where(rng < 1e-12, 1.0, rng)}
        elif self.kind == "maxabs":
            m = np.abs(X).max(0)
            self.stats = {"scale": np.where(m < 1e-12, 1.0, m)}
        else:
            self.stats = {"width": np.array([float(X.shape[1])])}
        return self

    def _check(self, X):
        if not self.fitted:
            raise NotFitted(f"{self.kind} preprocessor used before fit")
        X = np.asarray(X, dtype=float)
        if X.ndim == 1:
            X = X[None, :]
        return X

    def transform(self, X):
        X = self._check(X)
        s = self.stats
        if self.kind == "standardize":
            return (X - s["mean"]) / s["scale"]
        if self.kind == "normalize01":
            return (X - s["min"]) / s["scale"]
        if self.kind == "maxabs":
            return X / s["scale"]
        if self.kind == "quadratic":
            i, j = np.triu_indices(X.shape[1])
            return np.hstack([X, X[:, i] * X[:, j]])
        return X.copy()

    def fit_transform(self, X):
        return self.fit(X).transform(X)

    def inverse_transform(self, Z):
        Z = self._check(Z)
        s = self.stats
        if self.kind == "standardize":
            return Z * s["scale"] + s["mean"]
        if self.kind == "normalize01":
            return Z * s["scale"] + s["min"]
        if self.kind == "maxabs":
            return Z * s["scale"]
        if self.kind == "quadratic":
            return Z[:, : int(s["width"][0])].copy()
        return Z.copy()

    def to_arrays(self):
        if not self.fitted:
            raise NotFitted("cannot serialize an unfitted preprocessor")
        return {k: np.asarray(v, dtype=float) for k, v in self.stats.items()}

    @classmethod
    def from_arrays(cls, kind, arrays):
        p = cls(kind)
        p.stats = {k: np.asarray(v, dtype=float) for k, v in arrays.items()}
        return p


def fit_transform(pre, X):
    return pre.fit_transform(X)


# ---------------------------------------------------------------------------
# partitions and folds


@dataclass(frozen=True)
class PartitionSpec:
    train: float = 0.63
    validation: float = 0.07
    test: float = 0.30
    seed: int = 0

    def __post_init__(self):
        fr = (self.train, self.validation, self.test)
        if min(fr) <= 0:
            raise InvalidArgument("partition fractions must be positive")
        if abs(sum(fr) - 1.0) > 1e-9:
            raise InvalidArgument(f"partition fractions sum to {sum(fr)}, not 1")


def partition_counts(n_sims, spec):
    """Sims per partition: train rounds down, validation rounds up, test takes the rest."""
    n_train = int(np.floor(spec.train * n_sims + 1e-9))
    n_val = int(np.ceil(spec.validation * n_sims - 1e-9))
    n_test = n_sims - n_train - n_val
    if min(n_train, n_val, n_test) < 1:
        raise InvalidArgument(
            f"{n_sims} simulations cannot give every partition at least one sim under {spec}")
    return n_train, n_val, n_test


def partition_sims(sim_ids, spec):
    ids = np.unique(np.asarray(sim_ids))
    n_train, n_val, _ = partition_counts(ids.size, spec)
    perm = np.random.default_rng(spec.seed).permutation(ids)
    return {"train": np.sort(perm[:n_train]),
            "validation": np.sort(perm[n_train:n_train + n_val]),
            "test": np.sort(perm[n_train + n_val:])}


def partition(dataset, spec):
    parts = partition_sims(dataset.sim_ids, spec)
    return {name: dataset.subset(ids) for name, ids in parts.items()}


def kfold(sim_ids, k, seed=0):
    ids = np.unique(np.asarray(sim_ids))
    if not 2 <= k <= ids.size:
        raise InvalidArgument(f"k must lie in [2, {ids.size}], got {k}")
    perm = np.random.default_rng(seed).permutation(ids)
    return [np.sort(f) for f in np.array_split(perm, k)]


# ---------------------------------------------------------------------------
# grid search


def expand_grid(hyper_grid):
    """Settings in deterministic order: the last key varies fastest."""
    if isinstance(hyper_grid, dict):
        keys = list(hyper_grid)
        vals = [list(v) if isinstance(v, (list, tuple)) else [v] for v in hyper_grid.values()]
        return [dict(zip(keys, combo)) for combo in itertools.product(*vals)]
    return [dict(s) for s in hyper_grid]


@dataclass
class GridSearchResult:
    best_params: dict
    best_index: int
    table: list = field(default_factory=list)   # dicts: params, mean, variance, scores, error

    def to_csv(self):
        buf = io.StringIO()
        n_folds = max(len(r["scores"]) for r in self.table)
        buf.write("index,params,mean,variance," + ",".join(f"fold_{k}" for k in range(n_folds)) + "\n")
        for i, r in enumerate(self.table):
            scores = [fmt(s) for s in r["scores"]] + [""] * (n_folds - len(r["scores"]))
            params = json.dumps(r["params"], sort_keys=True).replace('"', '""')
            buf.write(f'{i},"{params}",{fmt(r["mean"])},{fmt(r["variance"])},' + ",".join(scores) + "\n")
        return buf.getvalue()


def grid_search(family, hyper_grid, data, k=10, seed=0, **fit_kw):
    """Exhaustive k-fold (by simulation) search; highest mean score wins, first on ties.

    ``family`` is an emulator name or a callable ``fit(X, y, **params)`` returning
    an object with ``predict``.  A failing fit scores -inf for that fold.
    """
    from .emulators import fit_emulator
    from .metrics import accuracy, r2_score

    settings = expand_grid(hyper_grid)
    if not settings:
        raise InvalidArgument("hyper_grid is empty")
    folds = kfold(data.sim_ids, k, seed)
    score = accuracy if data.task == "classification" else r2_score
    table = []
    best_i, best_mean = 0, -np.inf
    for i, params in enumerate(settings):
        scores, error = [], None
        for f, held in enumerate(folds):
            tr = data.subset(np.setdiff1d(data.sims, held))
            va = data.subset(held)
            try:
                if callable(family):
                    model = family(tr.X, tr.y, **params)
                else:
                    model = fit_emulator(family, tr, params=params, seed=seed, **fit_kw)
                s = float(score(va.y, model.predict(va.X)))
                if not np.isfinite(s):
                    s = -np.inf
            except Exception as exc:   # noqa: BLE001 - any failed fit is scored, not raised
                log.info("grid setting %s fold %d failed: %s", params, f, exc)
                s, error = -np.inf, f"{type(exc).__name__}: {exc}"
            scores.append(s)
        sc = np.array(scores)
        mean = float(sc.mean()) if np.all(np.isfinite(sc)) else -np.inf
        var = float(sc.var()) if np.all(np.isfinite(sc)) else np.inf
        table.append({"params": params, "mean": mean, "variance": var, "scores": scores,
                      "error": error})
        if mean > best_mean:
            best_i, best_mean = i, mean
    return GridSearchResult(settings[best_i], best_i, table)
