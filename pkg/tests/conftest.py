import numpy as np
import pytest

from mixemu.pde import (DispersionParams, FlowParams, ReactionMode, ReactionParams,
                        SimulationConfig)


def cosine_series(x, t, d, n_terms=400):
    """Zero-flux 1D diffusion of a step (1 on x < 1/2) on [0, 1]."""
    m = np.arange(1, n_terms + 1)
    coef = 2.0 * np.sin(m * np.pi / 2) / (m * np.pi)
    decay = np.exp(-d * (m * np.pi) ** 2 * t)
    return 0.5 + (coef * decay) @ np.cos(np.pi * np.outer(m, x))


def make_config(v0=1.0, kfl=1, t_osc=0.1, ratio=10.0, d_m=1e-3, mode="instantaneous",
                n_side=11, dt=0.01, n_steps=10, k_ab=0.0, alpha_l=1.0):
    return SimulationConfig(
        flow=FlowParams(v0, kfl, t_osc),
        dispersion=DispersionParams.from_ratio(ratio, d_m, alpha_l),
        reaction=ReactionParams(ReactionMode(mode), k_ab),
        mesh_n_side=n_side, dt=dt, n_steps=n_steps)


def isotropic_config(d_m=1e-3, n_side=11, dt=0.01, n_steps=10, mode="off"):
    return SimulationConfig(
        flow=FlowParams(0.0, 1, 0.1),
        dispersion=DispersionParams(d_m, 0.0, 0.0),
        reaction=ReactionParams(ReactionMode(mode)),
        mesh_n_side=n_side, dt=dt, n_steps=n_steps)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)
