import pytest

from mixemu.campaign import DESK_GRID, enumerate_grid
from mixemu.config import (emulator_params, grid_from_config, load_config, parse_value,
                           partition_from_config, search_grid, simulation_from_config)
from mixemu.errors import InvalidArgument


def test_parse_value():
    assert parse_value("3") == 3
    assert parse_value("1e-3") == 1e-3
    assert parse_value("yes") is True
    assert parse_value("none") is None
    assert parse_value("relu") == "relu"
    assert parse_value("1, 10, 100") == [1, 10, 100]


def test_ini_and_overrides(tmp_path):
    p = tmp_path / "run.ini"
    p.write_text("[simulation]\ndt = 0.01\nn_steps = 5\n[grid]\nv0 = 0.1, 1.0\n"
                 "[emulator.mlp]\nhidden = 10, 10\n[gridsearch.ridge]\nalpha2 = 1.0\n")
    cfg = load_config(p, ["simulation.dt=0.02", "grid.kfl=1,2"])
    sim = simulation_from_config(cfg)
    assert sim.dt == 0.02 and sim.n_steps == 5
    g = grid_from_config(cfg)
    assert g.v0 == (0.1, 1.0) and g.kappa_f_L == (1, 2)
    assert emulator_params(cfg, "mlp") == {"hidden": [10, 10]}
    assert search_grid(cfg, "ridge") == {"alpha2": [1.0]}
    assert search_grid(cfg, "lasso") is None


def test_json_config(tmp_path):
    p = tmp_path / "run.json"
    p.write_text('{"partition": {"train": 0.6, "validation": 0.1, "test": 0.3, "seed": 4}}')
    spec = partition_from_config(load_config(p))
    assert (spec.train, spec.seed) == (0.6, 4)
    assert partition_from_config(load_config(p), seed=9).seed == 9


def test_missing_file_names_path(tmp_path):
    with pytest.raises(FileNotFoundError, match="nope.ini"):
        load_config(tmp_path / "nope.ini")


def test_bad_override():
    with pytest.raises(InvalidArgument):
        load_config(None, ["dt=1"])
    with pytest.raises(InvalidArgument):
        load_config(None, ["simulation.dt"])


def test_bad_values():
    with pytest.raises(InvalidArgument):
        simulation_from_config({"simulation": {"dt": "fast"}})


def test_shipped_desk_config():
    from pathlib import Path
    cfg = load_config(Path(__file__).resolve().parents[1] / "configs" / "desk.ini")
    g = grid_from_config(cfg)
    assert g == DESK_GRID
    assert len(enumerate_grid(g)) == 108
    assert simulation_from_config(cfg).mesh_n_side == 41
