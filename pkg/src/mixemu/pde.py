"""Reaction-diffusion solver for the segregated reaction tank.

Species A and B start on the left and right halves of the unit square and
react irreversibly, ``n_A A + n_B B -> n_C C``.  Transport is pure dispersion
with the velocity-dependent tensor

    D = Dm I + aT |v| I + (aL - aT) / |v| v (x) v

driven by an oscillating cellular vortex field.  Each time step is a Lie
split: backward-Euler P1 Galerkin diffusion with lumped mass and zero-flux
walls, then a pointwise reaction update.  Bound violations of the linear
solve are removed by projected Gauss-Seidel on the box [0, c_max], followed
by a bound-preserving rescale that restores the species mass.
"""

from __future__ import annotations

import enum
import functools
import hashlib
import json
import math
import struct
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numba
import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .errors import FormatError, InvalidArgument, StepDivergence

SPECIES = ("A", "B", "C")

PGS_MAX_SWEEPS = 10_000
PGS_TOL = 1e-10
DIRECT_RESIDUAL_TOL = 1e-8


class ReactionMode(enum.Enum):
    OFF = "off"
    INSTANTANEOUS = "instantaneous"
    FINITE_RATE = "finite_rate"


@dataclass(frozen=True)
class FlowParams:
    v0: float = 1.0
    kappa_f_L: int = 1
    t_osc: float = 0.1

    def __post_init__(self):
        if not self.v0 >= 0:
            raise InvalidArgument(f"v0 must be >= 0, got {self.v0}")
        if int(self.kappa_f_L) != self.kappa_f_L or self.kappa_f_L < 1:
            raise InvalidArgument(f"kappa_f_L must be an integer >= 1, got {self.kappa_f_L}")
        if not self.t_osc > 0:
            raise InvalidArgument(f"t_osc must be > 0, got {self.t_osc}")
        object.__setattr__(self, "kappa_f_L", int(self.kappa_f_L))


@dataclass(frozen=True)
class DispersionParams:
    d_m: float = 1e-3
    alpha_l: float = 1.0
    alpha_t: float = 0.1
    velocity_floor: float = 1e-12

    def __post_init__(self):
        if not self.d_m >= 0:
            raise InvalidArgument(f"d_m must be >= 0, got {self.d_m}")
        if self.alpha_t < 0 or self.alpha_l < self.alpha_t:
            raise InvalidArgument(
                f"need alpha_l >= alpha_t >= 0, got alpha_l={self.alpha_l}, alpha_t={self.alpha_t}")
        if not self.velocity_floor > 0:
            raise InvalidArgument("velocity_floor must be > 0")

    @classmethod
    def from_ratio(cls, ratio, d_m, alpha_l=1.0, **kw):
        """Build from an anisotropy ratio aL/aT with aL held fixed."""
        if not ratio >= 1:
            raise InvalidArgument(f"anisotropy ratio must be >= 1, got {ratio}")
        return cls(d_m=d_m, alpha_l=alpha_l, alpha_t=alpha_l / ratio, **kw)

    @property
    def aniso_ratio(self):
        return self.alpha_l / self.alpha_t if self.alpha_t > 0 else math.inf


@dataclass(frozen=True)
class ReactionParams:
    mode: ReactionMode = ReactionMode.INSTANTANEOUS
    k_ab: float = 0.0
    stoich: tuple = (1, 1, 1)

    def __post_init__(self):
        mode = ReactionMode(self.mode)
        object.__setattr__(self, "mode", mode)
        stoich = tuple(int(s) for s in self.stoich)
        if len(stoich) != 3 or min(stoich) < 1:
            raise InvalidArgument(f"stoichiometric coefficients must be positive integers, got {self.stoich}")
        object.__setattr__(self, "stoich", stoich)
        if mode is ReactionMode.FINITE_RATE and not self.k_ab > 0:
            raise InvalidArgument("finite-rate reaction needs k_ab > 0")


@dataclass(frozen=True)
class SimulationConfig:
    flow: FlowParams = field(default_factory=FlowParams)
    dispersion: DispersionParams = field(default_factory=DispersionParams)
    reaction: ReactionParams = field(default_factory=ReactionParams)
    mesh_n_side: int = 41
    dt: float = 0.005
    n_steps: int = 200

    def __post_init__(self):
        if self.mesh_n_side < 3:
            raise InvalidArgument("mesh_n_side must be >= 3")
        if not (self.dt > 0 and math.isfinite(self.dt)):
            raise InvalidArgument("dt must be finite and > 0")
        if self.n_steps < 1:
            raise InvalidArgument("n_steps must be >= 1")

    @property
    def horizon(self):
        return self.dt * self.n_steps

    @classmethod
    def over_horizon(cls, horizon=1.0, n_steps=200, **kw):
        return cls(dt=horizon / n_steps, n_steps=n_steps, **kw)

    def to_dict(self):
        d = asdict(self)
        d["reaction"]["mode"] = self.reaction.mode.value
        d["reaction"]["stoich"] = list(self.reaction.stoich)
        return d

    @classmethod
    def from_dict(cls, d):
        return cls(
            flow=FlowParams(**d["flow"]),
            dispersion=DispersionParams(**d["dispersion"]),
            reaction=ReactionParams(**d["reaction"]),
            mesh_n_side=int(d["mesh_n_side"]),
            dt=float(d["dt"]),
            n_steps=int(d["n_steps"]),
        )

    def config_hash(self):
        blob = json.dumps(self.to_dict(), sort_keys=True).encode()
        return hashlib.sha256(blob).hexdigest()[:16]


# ---------------------------------------------------------------------------
# mesh


@dataclass(frozen=True, eq=False)
class Mesh:
    n_side: int
    points: np.ndarray      # (n_nodes, 2)
    triangles: np.ndarray   # (n_tri, 3), counter-clockwise
    lumped_mass: np.ndarray
    boundary: np.ndarray    # bool per node

    @property
    def n_nodes(self):
        return self.points.shape[0]

    def areas(self):
        p = self.points[self.triangles]
        e1 = p[:, 1] - p[:, 0]
        e2 = p[:, 2] - p[:, 0]
        return 0.5 * (e1[:, 0] * e2[:, 1] - e1[:, 1] * e2[:, 0])


def build_mesh(n_side):
    """Structured right-triangle mesh of the unit square.

    Cell diagonals alternate by quadrant so that the triangulation is
    invariant under the reflections x -> 1 - x and y -> 1 - y (exactly so
    when ``n_side`` is odd).
    """
    if int(n_side) != n_side or n_side < 3:
        raise InvalidArgument(f"n_side must be an integer >= 3, got {n_side}")
    n = int(n_side)
    h = 1.0 / (n - 1)
    ii, jj = np.meshgrid(np.arange(n), np.arange(n))
    points = np.column_stack([ii.ravel() * h, jj.ravel() * h])
    node = lambda i, j: j * n + i

    ci, cj = np.meshgrid(np.arange(n - 1), np.arange(n - 1))
    ci, cj = ci.ravel(), cj.ravel()
    p00, p10 = node(ci, cj), node(ci + 1, cj)
    p11, p01 = node(ci + 1, cj + 1), node(ci, cj + 1)
    # "/" diagonal where (cx - 1/2)(cy - 1/2) > 0, "\" otherwise
    slash = (2 * ci + 1 - (n - 1)) * (2 * cj + 1 - (n - 1)) > 0
    t1 = np.where(slash[:, None], np.column_stack([p00, p10, p11]), np.column_stack([p00, p10, p01]))
    t2 = np.where(slash[:, None], np.column_stack([p00, p11, p01]), np.column_stack([p10, p11, p01]))
    triangles = np.vstack([t1, t2]).astype(np.int64)

    p = points[triangles]
    area = 0.5 * ((p[:, 1, 0] - p[:, 0, 0]) * (p[:, 2, 1] - p[:, 0, 1])
                  - (p[:, 2, 0] - p[:, 0, 0]) * (p[:, 1, 1] - p[:, 0, 1]))
    mass = np.zeros(n * n)
    np.add.at(mass, triangles.ravel(), np.repeat(area / 3.0, 3))

    boundary = (ii.ravel() == 0) | (ii.ravel() == n - 1) | (jj.ravel() == 0) | (jj.ravel() == n - 1)
    for a in (points, triangles, mass, boundary):
        a.setflags(write=False)
    return Mesh(n, points, triangles, mass, boundary)


# ---------------------------------------------------------------------------
# flow field and dispersion


def _first_branch(t, t_osc):
    t = np.asarray(t, dtype=float)
    phase = t / t_osc - np.floor(t / t_osc)
    return phase < 0.5


def stream_function_at(p, t, flow):
    x, y = np.asarray(p, dtype=float)[..., 0], np.asarray(p, dtype=float)[..., 1]
    k = 2.0 * np.pi * flow.kappa_f_L
    base = np.sin(k * x) - np.sin(k * y)
    pert = np.where(_first_branch(t, flow.t_osc), np.cos(k * y), -np.cos(k * x))
    return (base + flow.v0 * pert) / k


def velocity_at(p, t, flow):
    """Velocity ``(..., 2)`` as the rotated gradient of the stream function."""
    p = np.asarray(p, dtype=float)
    x, y = p[..., 0], p[..., 1]
    k = 2.0 * np.pi * flow.kappa_f_L
    first = _first_branch(t, flow.t_osc)
    vx = np.cos(k * y) + np.where(first, flow.v0 * np.sin(k * y), 0.0)
    vy = np.cos(k * x) + np.where(first, 0.0, flow.v0 * np.sin(k * x))
    return np.stack(np.broadcast_arrays(vx, vy), axis=-1)


def dispersion_from_velocity(v, disp):
    v = np.asarray(v, dtype=float)
    speed = np.linalg.norm(v, axis=-1)
    eye = np.eye(2)
    safe = np.where(speed < disp.velocity_floor, 1.0, speed)
    outer = v[..., :, None] * v[..., None, :]
    D = ((disp.d_m + disp.alpha_t * speed)[..., None, None] * eye
         + ((disp.alpha_l - disp.alpha_t) / safe)[..., None, None] * outer)
    still = speed < disp.velocity_floor
    if np.any(still):
        D = np.where(still[..., None, None], disp.d_m * eye, D)
    return D


def dispersion_at(p, t, flow, disp):
    return dispersion_from_velocity(velocity_at(p, t, flow), disp)


# ---------------------------------------------------------------------------
# assembly


def _gradients(mesh):
    p = mesh.points[mesh.triangles]
    x, y = p[..., 0], p[..., 1]
    area2 = (x[:, 1] - x[:, 0]) * (y[:, 2] - y[:, 0]) - (x[:, 2] - x[:, 0]) * (y[:, 1] - y[:, 0])
    gx = np.stack([y[:, 1] - y[:, 2], y[:, 2] - y[:, 0], y[:, 0] - y[:, 1]], axis=1) / area2[:, None]
    gy = np.stack([x[:, 2] - x[:, 1], x[:, 0] - x[:, 2], x[:, 1] - x[:, 0]], axis=1) / area2[:, None]
    return np.stack([gx, gy], axis=-1), 0.5 * area2  # (n_tri, 3, 2), (n_tri,)


def stiffness_matrix(mesh, D):
    """Assemble the P1 stiffness for per-element tensors ``D`` (n_tri, 2, 2)."""
    G, area = _gradients(mesh)
    Ke = area[:, None, None] * np.einsum("eia,eab,ejb->eij", G, D, G)
    rows = np.repeat(mesh.triangles, 3, axis=1).ravel()
    cols = np.tile(mesh.triangles, (1, 3)).ravel()
    n = mesh.n_nodes
    K = sp.coo_matrix((Ke.ravel(), (rows, cols)), shape=(n, n)).tocsr()
    K.sum_duplicates()
    K.sort_indices()
    return K


def element_centroids(mesh):
    return mesh.points[mesh.triangles].mean(axis=1)


@numba.njit(cache=True)
def _projected_gauss_seidel(indptr, indices, data, b, x, lo, hi, tol, max_sweeps):
    n = x.shape[0]
    diag = np.zeros(n)
    for i in range(n):
        for k in range(indptr[i], indptr[i + 1]):
            if indices[k] == i:
                diag[i] = data[k]
    delta = 0.0
    for sweep in range(max_sweeps):
        delta = 0.0
        scale = 0.0
        for i in range(n):
            s = b[i]
            for k in range(indptr[i], indptr[i + 1]):
                j = indices[k]
                if j != i:
                    s -= data[k] * x[j]
            xi = s / diag[i]
            if xi < lo:
                xi = lo
            elif xi > hi:
                xi = hi
            d = abs(xi - x[i])
            if d > delta:
                delta = d
            x[i] = xi
            if abs(xi) > scale:
                scale = abs(xi)
        if delta == 0.0 or delta <= tol * scale:
            return sweep + 1, delta / max(scale, 1e-300)
    return -1, delta / max(scale, 1e-300)


def projected_gauss_seidel(A, b, x0, lo=0.0, hi=np.inf, tol=PGS_TOL, max_sweeps=PGS_MAX_SWEEPS):
    """Solve the box-constrained problem min 1/2 x'Ax - b'x, lo <= x <= hi.

    Returns ``(x, sweeps, residual)``; ``sweeps`` is -1 when the cap is hit.
    """
    A = sp.csr_matrix(A)
    x = np.clip(np.array(x0, dtype=float), lo, hi)
    sweeps, res = _projected_gauss_seidel(
        A.indptr.astype(np.int64), A.indices.astype(np.int64), A.data.astype(float),
        np.ascontiguousarray(b, dtype=float), x, float(lo), float(hi), float(tol), int(max_sweeps))
    return x, int(sweeps), float(res)


# ---------------------------------------------------------------------------
# reaction


def react(a, b, c, dt, reaction):
    """Pointwise reaction update; returns new ``(a, b, c)``."""
    mode = reaction.mode
    if mode is ReactionMode.OFF:
        return a, b, c
    na, nb, nc = reaction.stoich
    if mode is ReactionMode.INSTANTANEOUS:
        m = np.minimum(a / na, b / nb)
        a2 = np.maximum(a - na * m, 0.0)
        b2 = np.maximum(b - nb * m, 0.0)
        return a2, b2, c + nc * m
    # da/dt = -na k a b, db/dt = -nb k a b  =>  nb a - na b is invariant,
    # and a solves the logistic equation da/dt = k inv a - k nb a^2
    k = reaction.k_ab
    inv = nb * a - na * b
    r = k * inv
    s = k * nb
    with np.errstate(over="ignore", invalid="ignore", divide="ignore"):
        growth = np.where(r == 0.0, dt, -np.expm1(-r * dt) / np.where(r == 0.0, 1.0, r))
        a2 = a / (np.exp(-r * dt) + s * a * growth)
    a2 = np.where(a > 0, a2, 0.0)
    a2 = np.clip(a2, 0.0, a)
    b2 = np.maximum((nb * a2 - inv) / na, 0.0)
    return a2, b2, c + nc * (a - a2) / na


# ---------------------------------------------------------------------------
# solver


def initial_condition(mesh):
    """A on the left half, B on the right, 1/2 each on the interface x = 1/2."""
    n = mesh.n_side
    i = np.rint(mesh.points[:, 0] * (n - 1)).astype(np.int64)
    left = 2 * i < n - 1
    mid = 2 * i == n - 1
    a = np.where(left, 1.0, np.where(mid, 0.5, 0.0))
    b = np.where(left, 0.0, np.where(mid, 0.5, 1.0))
    return np.stack([a, b, np.zeros(mesh.n_nodes)])


class ReactionDiffusionSolver:
    """Holds the mesh and the two branch operators for one configuration.

    The velocity field has only two time branches, so both implicit
    diffusion operators are assembled and factorized once.
    """

    def __init__(self, config, dt=None, upper_bound=1.0):
        self.config = config
        self.dt = float(config.dt if dt is None else dt)
        self.mesh = build_mesh(config.mesh_n_side)
        self.upper_bound = float(upper_bound)
        self._centroids = element_centroids(self.mesh)
        self._ops = {}
        self.mass_defect = np.zeros(3)
        self.pgs_sweeps = 0

    def operator(self, first_branch):
        key = bool(first_branch)
        if key not in self._ops:
            cfg = self.config
            t_probe = 0.0 if key else 0.5 * cfg.flow.t_osc
            D = dispersion_at(self._centroids, t_probe, cfg.flow, cfg.dispersion)
            K = stiffness_matrix(self.mesh, D)
            A = (sp.diags(self.mesh.lumped_mass / self.dt) + K).tocsc()
            self._ops[key] = (A.tocsr(), spla.splu(A))
        return self._ops[key]

    def diffuse(self, state, t_new):
        A, lu = self.operator(bool(_first_branch(t_new, self.config.flow.t_osc)))
        m = self.mesh.lumped_mass
        out = np.empty_like(state)
        for s in range(state.shape[0]):
            rhs = m * state[s] / self.dt
            x = lu.solve(rhs)
            if not np.all(np.isfinite(x)):
                raise StepDivergence("linear solve produced non-finite values", residual=np.inf)
            # a numerically singular operator (e.g. absurd dt) shows up here
            res = np.linalg.norm(A @ x - rhs) / max(np.linalg.norm(rhs), 1e-300)
            if res > DIRECT_RESIDUAL_TOL:
                raise StepDivergence(f"direct solve residual {res:.3e} exceeds {DIRECT_RESIDUAL_TOL}",
                                     residual=res)
            lo, hi = 0.0, self.upper_bound
            if x.min() < lo or x.max() > hi:
                x, sweeps, res = projected_gauss_seidel(A, rhs, x, lo, hi)
                if sweeps < 0:
                    raise StepDivergence(
                        f"projected Gauss-Seidel exceeded {PGS_MAX_SWEEPS} sweeps "
                        f"(relative residual {res:.3e})", residual=res)
                self.pgs_sweeps += sweeps
                x = self._restore_mass(x, float(m @ state[s]), s, hi)
            out[s] = x
        return out

    def _restore_mass(self, x, target, species, hi):
        m = self.mesh.lumped_mass
        mass = float(m @ x)
        defect = mass - target
        self.mass_defect[species] += abs(defect)
        if defect > 0 and mass > 0:
            x = x * (target / mass)
        elif defect < 0:
            room = float(m @ (hi - x))
            if room > 0:
                x = x + (-defect / room) * (hi - x)
        return np.clip(x, 0.0, hi)

    def advance(self, state, t):
        t_new = t + self.dt
        a, b, c = self.diffuse(state, t_new)
        return np.stack(react(a, b, c, self.dt, self.config.reaction))


@functools.lru_cache(maxsize=8)
def _cached_solver(config, dt):
    return ReactionDiffusionSolver(config, dt)


def step(state, t, dt, config):
    """Advance nodal fields ``state`` (3, n_nodes) from ``t`` to ``t + dt``."""
    state = np.asarray(state, dtype=float)
    if np.any(state < 0):
        raise InvalidArgument("nodal concentrations must be non-negative")
    if not dt > 0:
        raise InvalidArgument("dt must be > 0")
    return _cached_solver(config, float(dt)).advance(state, float(t))


@dataclass(frozen=True, eq=False)
class Trajectory:
    config: SimulationConfig
    save_every: int
    times: np.ndarray        # (n_frames,)
    conc: np.ndarray         # (n_frames, 3, n_nodes)
    complete: bool
    mass_defect: np.ndarray = field(default_factory=lambda: np.zeros(3))

    @property
    def n_frames(self):
        return self.times.shape[0]

    def species(self, name):
        return self.conc[:, SPECIES.index(name)]


def frame_steps(n_steps, save_every):
    """Step indices stored by :func:`solve`: 0, s, 2s, ... plus the last."""
    idx = list(range(0, n_steps + 1, save_every))
    if idx[-1] != n_steps:
        idx.append(n_steps)
    return idx


def solve(config, save_every=1):
    if save_every < 1:
        raise InvalidArgument("save_every must be >= 1")
    solver = ReactionDiffusionSolver(config)
    state = initial_condition(solver.mesh)
    keep = set(frame_steps(config.n_steps, save_every))
    times, frames = [0.0], [state]
    complete = True
    for k in range(config.n_steps):
        try:
            state = solver.advance(state, k * config.dt)
        except StepDivergence:
            complete = False
            break
        if k + 1 in keep:
            times.append((k + 1) * config.dt)
            frames.append(state)
    times = np.array(times)
    conc = np.stack(frames)
    times.setflags(write=False)
    conc.setflags(write=False)
    return Trajectory(config, int(save_every), times, conc, complete, solver.mass_defect.copy())


# ---------------------------------------------------------------------------
# binary trajectory files

_MAGIC = b"MXT1"
_VERSION = 1
_INTS = struct.Struct("<10i")
_FLOATS = struct.Struct("<9d")
_MODES = {ReactionMode.OFF: 0, ReactionMode.INSTANTANEOUS: 1, ReactionMode.FINITE_RATE: 2}


def write_trajectory(path, traj):
    """Write ``path`` (binary) and ``path + '.txt'`` (metadata sidecar)."""
    path = Path(path)
    cfg = traj.config
    header = _INTS.pack(cfg.mesh_n_side, cfg.n_steps, traj.save_every, cfg.flow.kappa_f_L,
                        _MODES[cfg.reaction.mode], *cfg.reaction.stoich,
                        traj.n_frames, int(traj.complete))
    floats = _FLOATS.pack(cfg.dt, cfg.flow.v0, cfg.flow.t_osc, cfg.dispersion.d_m,
                          cfg.dispersion.alpha_l, cfg.dispersion.alpha_t,
                          cfg.dispersion.velocity_floor, cfg.reaction.k_ab, 0.0)
    with open(path, "wb") as f:
        f.write(_MAGIC + struct.pack("<I", _VERSION) + header + floats)
        f.write(np.ascontiguousarray(traj.times, dtype="<f8").tobytes())
        f.write(np.ascontiguousarray(traj.conc, dtype="<f8").tobytes())
    lines = [f"{k} = {v}" for k, v in _flatten(cfg.to_dict())]
    lines += [f"save_every = {traj.save_every}", f"n_frames = {traj.n_frames}",
              f"complete = {str(traj.complete).lower()}", f"config_hash = {cfg.config_hash()}",
              "mass_defect = " + ", ".join(repr(float(d)) for d in traj.mass_defect)]
    Path(str(path) + ".txt").write_text("\n".join(lines) + "\n")


def _flatten(d, prefix=""):
    for k, v in d.items():
        if isinstance(v, dict):
            yield from _flatten(v, f"{prefix}{k}.")
        else:
            yield f"{prefix}{k}", v


def read_trajectory(path):
    data = Path(path).read_bytes()
    if data[:4] != _MAGIC:
        raise FormatError(f"{path}: not a trajectory file")
    (version,) = struct.unpack_from("<I", data, 4)
    if version != _VERSION:
        raise FormatError(f"{path}: unsupported version {version}")
    off = 8
    n_side, n_steps, save_every, kfl, mode, na, nb, nc, n_frames, complete = _INTS.unpack_from(data, off)
    off += _INTS.size
    dt, v0, t_osc, d_m, a_l, a_t, floor, k_ab, _ = _FLOATS.unpack_from(data, off)
    off += _FLOATS.size
    mode = {v: k for k, v in _MODES.items()}[mode]
    cfg = SimulationConfig(
        flow=FlowParams(v0, kfl, t_osc),
        dispersion=DispersionParams(d_m, a_l, a_t, floor),
        reaction=ReactionParams(mode, k_ab, (na, nb, nc)),
        mesh_n_side=n_side, dt=dt, n_steps=n_steps)
    n_nodes = n_side * n_side
    times = np.frombuffer(data, dtype="<f8", count=n_frames, offset=off).astype(float)
    off += 8 * n_frames
    conc = np.frombuffer(data, dtype="<f8", count=n_frames * 3 * n_nodes, offset=off)
    conc = conc.reshape(n_frames, 3, n_nodes).astype(float)
    return Trajectory(cfg, save_every, times, conc, bool(complete))
