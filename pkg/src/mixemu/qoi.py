"""Mixing quantities of interest computed from a trajectory."""

from dataclasses import dataclass

import numpy as np

from .errors import IncompleteRun, InvalidArgument
from .pde import SPECIES, build_mesh

CLASS_EDGES = (0.25, 0.5, 0.75)


@dataclass(frozen=True, eq=False)
class QoiSeries:
    sim_id: int
    times: np.ndarray
    cbar: np.ndarray       # (3, n_frames) normalized average concentration
    csq: np.ndarray        # (3, n_frames) normalized average squared concentration
    var: np.ndarray        # (3, n_frames) normalized variance (degree of mixing)
    mixing_class: np.ndarray  # (n_frames,) classes 1..4
    class_species: str = "C"

    def series(self, name):
        """Look up a series by campaign column name, e.g. ``"var_C"``."""
        if name in ("class_C", "class"):
            return self.mixing_class
        kind, species = name.rsplit("_", 1)
        table = {"cbar": self.cbar, "csq": self.csq, "var": self.var}
        return table[kind][SPECIES.index(species)]


def _require_complete(traj):
    if not traj.complete:
        raise IncompleteRun("trajectory did not run to completion")


def raw_moments(traj, species, mass=None):
    """Domain integrals of c and c**2 with lumped-mass quadrature."""
    _require_complete(traj)
    if mass is None:
        mass = build_mesh(traj.config.mesh_n_side).lumped_mass
    c = traj.conc[:, SPECIES.index(species)]
    return c @ mass, (c * c) @ mass


def _normalize(series):
    top = series.max()
    if top <= 0:
        return np.zeros_like(series)
    return np.clip(series / top, 0.0, 1.0)


def classify_mixing(sigma2):
    """Mixing class 1 (well mixed) .. 4 (ultra-weak) from a normalized variance.

    Bins are right-open, ``[0, .25) -> 1`` ... ``[.75, 1] -> 4``.
    """
    s = np.asarray(sigma2, dtype=float)
    if np.any(~np.isfinite(s)) or np.any(s < 0) or np.any(s > 1):
        raise InvalidArgument("degree of mixing must lie in [0, 1]")
    out = np.searchsorted(CLASS_EDGES, s, side="right") + 1
    return int(out) if out.ndim == 0 else out.astype(np.int64)


def normalized_qois(traj, sim_id=0, class_species="C"):
    _require_complete(traj)
    mass = build_mesh(traj.config.mesh_n_side).lumped_mass
    cbar, csq, var = [], [], []
    for s in SPECIES:
        m1, m2 = raw_moments(traj, s, mass)
        # round-off can push the variance a hair below zero
        v = np.maximum(m2 - m1 * m1, 0.0)
        cbar.append(_normalize(m1))
        csq.append(_normalize(m2))
        var.append(_normalize(v))
    var = np.array(var)
    cls = classify_mixing(var[SPECIES.index(class_species)])
    return QoiSeries(sim_id, np.array(traj.times), np.array(cbar), np.array(csq), var,
                     cls, class_species)
