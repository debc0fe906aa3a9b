"""Key-value run configuration.

The file is INI-style (``[section]`` then ``key = value``); a JSON object of
sections is accepted too.  Comma-separated values become lists.  Sections:

``[simulation]``  one solve: v0, aniso_ratio, d_m, kfl, t_osc, alpha_l,
                  mesh_n_side, dt, n_steps, save_every, reaction, k_ab
``[grid]``        the same keys, each a list for the sweep
``[partition]``   train, validation, test fractions and seed
``[train]``       emulators, targets, eval_sims (held-out sims for series output)
``[gridsearch]``  k (folds)
``[gridsearch.<emulator>]``  hyperparameter lists for one emulator
``[emulator.<emulator>]``    hyperparameter overrides for training
"""

import configparser
import json
from pathlib import Path

from .campaign import GridSpec, PartitionSpec
from .errors import InvalidArgument
from .pde import DispersionParams, FlowParams, ReactionMode, ReactionParams, SimulationConfig


def parse_scalar(text):
    t = str(text).strip()
    low = t.lower()
    if low in ("true", "yes", "on"):
        return True
    if low in ("false", "no", "off"):
        return False
    if low in ("none", "null"):
        return None
    try:
        return int(t)
    except ValueError:
        pass
    try:
        return float(t)
    except ValueError:
        return t


def parse_value(text):
    if isinstance(text, (list, tuple)):
        return [parse_scalar(v) if isinstance(v, str) else v for v in text]
    if not isinstance(text, str):
        return text
    if "," in text:
        return [parse_scalar(v) for v in text.split(",") if v.strip()]
    return parse_scalar(text)


def load_config(path=None, overrides=()):
    """Nested dict ``{section: {key: value}}`` with ``section.key=value`` overrides applied."""
    cfg = {}
    if path is not None:
        path = Path(path)
        if not path.is_file():
            raise FileNotFoundError(f"config file not found: {path}")
        text = path.read_text()
        if text.lstrip().startswith("{"):
            raw = json.loads(text)
            if not isinstance(raw, dict) or not all(isinstance(v, dict) for v in raw.values()):
                raise InvalidArgument(f"{path}: JSON config must map section names to objects")
            cfg = {s: {k: parse_value(v) for k, v in sec.items()} for s, sec in raw.items()}
        else:
            cp = configparser.ConfigParser(interpolation=None)
            cp.optionxform = str
            try:
                cp.read_string(text, source=str(path))
            except configparser.Error as exc:
                raise InvalidArgument(f"{path}: {exc}") from exc
            cfg = {s: {k: parse_value(v) for k, v in cp[s].items()} for s in cp.sections()}
    for item in overrides:
        if "=" not in item:
            raise InvalidArgument(f"override {item!r} is not of the form section.key=value")
        lhs, rhs = item.split("=", 1)
        if "." not in lhs:
            raise InvalidArgument(f"override key {lhs!r} needs a section, e.g. grid.v0")
        section, key = lhs.strip().rsplit(".", 1)
        cfg.setdefault(section, {})[key] = parse_value(rhs)
    return cfg


def _as_list(v):
    return list(v) if isinstance(v, (list, tuple)) else [v]


def simulation_from_config(cfg):
    s = dict(cfg.get("simulation", {}))
    try:
        return SimulationConfig(
            flow=FlowParams(float(s.get("v0", 1.0)), int(s.get("kfl", 1)), float(s.get("t_osc", 0.1))),
            dispersion=DispersionParams.from_ratio(float(s.get("aniso_ratio", 10.0)),
                                                   float(s.get("d_m", 1e-3)),
                                                   float(s.get("alpha_l", 1.0))),
            reaction=ReactionParams(ReactionMode(s.get("reaction", "instantaneous")),
                                    float(s.get("k_ab", 0.0))),
            mesh_n_side=int(s.get("mesh_n_side", 41)),
            dt=float(s.get("dt", 0.005)),
            n_steps=int(s.get("n_steps", 200)),
        )
    except (TypeError, ValueError) as exc:
        raise InvalidArgument(f"bad [simulation] section: {exc}") from exc


def grid_from_config(cfg):
    g = dict(cfg.get("grid", {}))
    base = GridSpec()
    try:
        return GridSpec(
            v0=tuple(float(v) for v in _as_list(g.get("v0", base.v0))),
            aniso_ratio=tuple(float(v) for v in _as_list(g.get("aniso_ratio", base.aniso_ratio))),
            d_m=tuple(float(v) for v in _as_list(g.get("d_m", base.d_m))),
            kappa_f_L=tuple(int(v) for v in _as_list(g.get("kfl", base.kappa_f_L))),
            t_osc=tuple(float(v) for v in _as_list(g.get("t_osc", base.t_osc))),
            mesh_n_side=int(g.get("mesh_n_side", base.mesh_n_side)),
            dt=float(g.get("dt", base.dt)),
            n_steps=int(g.get("n_steps", base.n_steps)),
            alpha_l=float(g.get("alpha_l", base.alpha_l)),
            reaction=str(g.get("reaction", base.reaction)),
            k_ab=float(g.get("k_ab", base.k_ab)),
        )
    except (TypeError, ValueError) as exc:
        raise InvalidArgument(f"bad [grid] section: {exc}") from exc


def partition_from_config(cfg, seed=None):
    p = dict(cfg.get("partition", {}))
    base = PartitionSpec()
    return PartitionSpec(float(p.get("train", base.train)), float(p.get("validation", base.validation)),
                         float(p.get("test", base.test)),
                         int(seed if seed is not None else p.get("seed", base.seed)))


def save_every_from_config(cfg, section="grid"):
    return int(cfg.get(section, {}).get("save_every", 1))


def emulator_params(cfg, name):
    return dict(cfg.get(f"emulator.{name}", {}))


def search_grid(cfg, name):
    sec = cfg.get(f"gridsearch.{name}")
    if sec is None:
        return None
    return {k: _as_list(v) for k, v in sec.items()}
