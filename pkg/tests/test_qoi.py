import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from conftest import isotropic_config, make_config
from mixemu.errors import IncompleteRun, InvalidArgument
from mixemu.pde import build_mesh, solve
from mixemu.qoi import classify_mixing, normalized_qois, raw_moments


@pytest.fixture(scope="module")
def reactive_traj():
    return solve(make_config(n_side=12, n_steps=20, dt=0.01))


def test_initial_moments_even_mesh(reactive_traj):
    # an even mesh has no nodes on the interface, so c is exactly 0 or 1
    m1, m2 = raw_moments(reactive_traj, "A")
    assert m1[0] == pytest.approx(0.5, abs=1e-12)
    assert m2[0] == pytest.approx(0.5, abs=1e-12)
    c1, c2 = raw_moments(reactive_traj, "C")
    assert c1[0] == 0 and c2[0] == 0
    assert m2[0] - m1[0] ** 2 == pytest.approx(0.25, abs=1e-12)


def test_cauchy_schwarz(reactive_traj):
    for s in "ABC":
        m1, m2 = raw_moments(reactive_traj, s)
        assert np.all(m2 >= m1 ** 2 - 1e-12)


def test_series_contracts(reactive_traj):
    q = normalized_qois(reactive_traj)
    for arr in (q.cbar, q.csq, q.var):
        assert arr.min() >= 0 and arr.max() <= 1
    for k in range(3):
        for arr in (q.cbar, q.csq, q.var):
            if arr[k].max() > 0:
                assert arr[k].max() == 1.0
    assert q.cbar[0, 0] == 1.0
    assert q.var[0, 0] == 1.0
    assert set(np.unique(q.mixing_class)) <= {1, 2, 3, 4}
    np.testing.assert_array_equal(q.series("var_C"), q.var[2])
    np.testing.assert_array_equal(q.series("class_C"), q.mixing_class)


def test_zero_series_normalizes_to_zero():
    tr = solve(isotropic_config(n_side=7, n_steps=3))
    q = normalized_qois(tr)
    np.testing.assert_array_equal(q.cbar[2], 0.0)
    np.testing.assert_array_equal(q.var[2], 0.0)


def test_variance_monotone_without_reaction():
    tr = solve(isotropic_config(d_m=1e-2, n_side=15, n_steps=30))
    q = normalized_qois(tr)
    assert q.var[0, 0] == 1.0
    assert np.all(np.diff(q.var[0]) <= 1e-10)


def test_incomplete_refused():
    tr = solve(make_config(n_side=7, dt=1e12, n_steps=2))
    with pytest.raises(IncompleteRun):
        raw_moments(tr, "A")
    with pytest.raises(IncompleteRun):
        normalized_qois(tr)


@pytest.mark.parametrize("s,cls", [(0.1, 1), (0.0, 1), (0.25, 2), (0.5, 3), (0.75, 4),
                                   (0.7499, 3), (1.0, 4)])
def test_classify_examples(s, cls):
    assert classify_mixing(s) == cls


@pytest.mark.parametrize("bad", [-0.01, 1.01, np.nan])
def test_classify_rejects(bad):
    with pytest.raises(InvalidArgument):
        classify_mixing(bad)


@given(st.floats(0, 1), st.floats(0, 1))
def test_classify_monotone(a, b):
    lo, hi = min(a, b), max(a, b)
    assert classify_mixing(lo) <= classify_mixing(hi)


def test_lumped_mass_quadrature_used(reactive_traj):
    mass = build_mesh(12).lumped_mass
    m1, _ = raw_moments(reactive_traj, "B")
    np.testing.assert_allclose(m1, reactive_traj.conc[:, 1] @ mass)
