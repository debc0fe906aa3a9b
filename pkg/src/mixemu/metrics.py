"""Scores, confusion matrices, evaluation reports and the solver-vs-emulator benchmark."""

import json
import time
from dataclasses import asdict, dataclass, field

import numpy as np

from .errors import InvalidArgument, UndefinedScore


def r2_score(y, yhat):
    y = np.asarray(y, dtype=float)
    yhat = np.asarray(yhat, dtype=float)
    if y.shape != yhat.shape or y.size == 0:
        raise InvalidArgument("y and yhat must have equal non-zero length")
    ss_tot = float(np.sum((y - y.mean()) ** 2))
    if ss_tot == 0:
        raise UndefinedScore("R^2 is undefined for a constant target")
    return 1.0 - float(np.sum((y - yhat) ** 2)) / ss_tot


def accuracy(y, yhat):
    y = np.asarray(y)
    yhat = np.asarray(yhat)
    if y.shape != yhat.shape or y.size == 0:
        raise InvalidArgument("y and yhat must have equal non-zero length")
    return float(np.mean(y == yhat))


def confusion_matrix(y, yhat, n_classes=4):
    """Counts of true class i (row) predicted as j (column); labels are 1..n_classes."""
    y = np.asarray(y).astype(np.int64)
    yhat = np.asarray(yhat).astype(np.int64)
    if y.shape != yhat.shape:
        raise InvalidArgument("y and yhat must have equal length")
    for lab in (y, yhat):
        if lab.size and (lab.min() < 1 or lab.max() > n_classes):
            raise InvalidArgument(f"labels must lie in 1..{n_classes}")
    cm = np.zeros((n_classes, n_classes), dtype=np.int64)
    np.add.at(cm, (y - 1, yhat - 1), 1)
    return cm


def off_diagonal_fraction(cm):
    cm = np.asarray(cm)
    return float((cm.sum() - np.trace(cm)) / cm.sum())


def median_time(fn, n_repeats=3):
    """Median wall time of ``fn()`` over repeats, on the monotonic clock; returns (seconds, last result)."""
    if n_repeats < 1:
        raise InvalidArgument("n_repeats must be >= 1")
    times = []
    out = None
    for _ in range(n_repeats):
        t0 = time.perf_counter()
        out = fn()
        times.append(time.perf_counter() - t0)
    return float(np.median(times)), out


@dataclass
class EvalEntry:
    emulator: str
    target: str
    train_score: float
    test_score: float
    fit_seconds: float
    predict_seconds: float
    train_rows: int = 0
    test_rows: int = 0
    confusion: list | None = None


@dataclass
class BenchmarkResult:
    config_hash: str
    emulator: str
    solve_seconds: float
    predict_seconds: float
    n_repeats: int
    n_frames: int

    @property
    def speedup(self):
        return self.solve_seconds / max(self.predict_seconds, 1e-12)


@dataclass
class EvalReport:
    seed: int
    partition: dict = field(default_factory=dict)   # name -> {"sims": n, "rows": n}
    entries: list = field(default_factory=list)
    benchmarks: list = field(default_factory=list)

    def add(self, entry):
        if entry.train_score > 1 + 1e-12 or entry.test_score > 1 + 1e-12:
            raise InvalidArgument("scores cannot exceed 1")
        if entry.fit_seconds < 0 or entry.predict_seconds < 0:
            raise InvalidArgument("times must be >= 0")
        self.entries.append(entry)

    def to_dict(self):
        d = {"seed": self.seed, "partition": self.partition,
             "entries": [asdict(e) for e in self.entries],
             "benchmarks": [dict(asdict(b), speedup=b.speedup) for b in self.benchmarks]}
        return d

    def to_json(self):
        return json.dumps(self.to_dict(), indent=2, sort_keys=True)

    @classmethod
    def from_json(cls, text):
        d = json.loads(text)
        rep = cls(d["seed"], d["partition"])
        rep.entries = [EvalEntry(**e) for e in d["entries"]]
        for b in d["benchmarks"]:
            b = dict(b)
            b.pop("speedup", None)
            rep.benchmarks.append(BenchmarkResult(**b))
        return rep

    def to_table(self):
        """Aligned text table: sizes, scores and training time per emulator and target."""
        total = sum(v.get("rows", 0) for v in self.partition.values()) or 1
        head = ("emulator", "target", "train %", "test %", "train score", "test score", "train time (s)")
        rows = [head]
        for e in self.entries:
            rows.append((e.emulator, e.target, f"{100 * e.train_rows / total:.1f}",
                         f"{100 * e.test_rows / total:.1f}", f"{e.train_score:.4f}",
                         f"{e.test_score:.4f}", f"{e.fit_seconds:.3f}"))
        widths = [max(len(r[i]) for r in rows) for i in range(len(head))]
        lines = ["  ".join(c.ljust(w) for c, w in zip(r, widths)).rstrip() for r in rows]
        lines.insert(1, "  ".join("-" * w for w in widths))
        for b in self.benchmarks:
            lines.append(f"benchmark {b.emulator} [{b.config_hash}]: solve {b.solve_seconds:.4g} s, "
                         f"predict {b.predict_seconds:.4g} s, speedup {b.speedup:.3g}x")
        return "\n".join(lines) + "\n"


def benchmark(sim_config, model, n_repeats=3, threads=1):
    """Time one solve against the emulator's prediction of the full QoI series.

    ``model`` is a fitted emulator (see ``mixemu.emulators``); its prediction
    covers every saved frame of the simulation, feature assembly included.
    Both sides run under a BLAS thread limit of ``threads``.
    """
    from threadpoolctl import threadpool_limits

    from .campaign import features_for_config
    from .pde import solve

    with threadpool_limits(limits=threads):
        t_solve, traj = median_time(lambda: solve(sim_config), n_repeats)
        n_frames = traj.n_frames
        t_pred, _ = median_time(
            lambda: model.predict(features_for_config(sim_config, traj.times)), n_repeats)
    return BenchmarkResult(sim_config.config_hash(), model.name, t_solve, t_pred, n_repeats, n_frames)
