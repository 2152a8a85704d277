import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from oracles import brute_force_hull
from scipy.spatial.transform import Rotation

from tetheropt.metrics import (
    DEFAULT_BETA,
    HullResult,
    ObjectiveConfig,
    calibrate_beta,
    compute_cqi,
    convex_hull,
    failure_penalty,
    integrate_fuel,
    is_success,
    objective_value,
)
from tetheropt.netsim import DebrisSpec

DEBRIS = DebrisSpec()
point_clouds = st.integers(0, 2**31 - 1).map(lambda s: np.random.default_rng(s).normal(size=(12, 3)) * [3.0, 2.0, 1.0])


def test_unit_cube():
    cube = np.array([[x, y, z] for x in (0, 1) for y in (0, 1) for z in (0, 1)], dtype=float)
    h = convex_hull(cube)
    assert h.volume == pytest.approx(1.0, abs=1e-12)
    assert h.surface_area == pytest.approx(6.0, abs=1e-12)
    assert len(h.vertex_ids) == 8


def test_regular_tetrahedron():
    tet = np.array([[1, 1, 1], [1, -1, -1], [-1, 1, -1], [-1, -1, 1]], dtype=float) / (2 * math.sqrt(2))
    h = convex_hull(tet)
    assert h.volume == pytest.approx(math.sqrt(2) / 12, rel=1e-12)
    assert h.surface_area == pytest.approx(math.sqrt(3), rel=1e-12)


def test_interior_points_do_not_change_the_hull():
    rng = np.random.default_rng(3)
    cube = np.array([[x, y, z] for x in (0, 1) for y in (0, 1) for z in (0, 1)], dtype=float)
    h = convex_hull(np.vstack([cube, rng.uniform(0.1, 0.9, size=(50, 3))]))
    assert h.volume == pytest.approx(1.0, abs=1e-12)
    assert set(h.vertex_ids) == set(range(8))


@pytest.mark.parametrize("n", [4, 6, 9, 12])
def test_matches_brute_force_oracle(n):
    rng = np.random.default_rng(n)
    for _ in range(10):
        pts = rng.uniform(-5, 5, size=(n, 3))
        v, a = brute_force_hull(pts)
        h = convex_hull(pts)
        assert h.volume == pytest.approx(v, rel=1e-9)
        assert h.surface_area == pytest.approx(a, rel=1e-9)


def test_planar_and_collinear_sets():
    rng = np.random.default_rng(0)
    xy = rng.uniform(size=(10, 2))
    flat = np.column_stack([xy, np.full(10, 2.0)])
    h = convex_hull(flat)
    assert h.volume == 0.0
    square = np.array([[0, 0, 0], [1, 0, 0], [0, 1, 0], [1, 1, 0], [0.5, 0.5, 0]], dtype=float)
    assert convex_hull(square).surface_area == pytest.approx(1.0, abs=1e-12)
    line = np.outer(np.linspace(0, 1, 6), [1.0, 2.0, 3.0])
    h = convex_hull(line)
    assert (h.volume, h.surface_area) == (0.0, 0.0)


def test_hull_input_validation():
    with pytest.raises(ValueError):
        convex_hull(np.zeros((3, 3)))
    with pytest.raises(ValueError):
        convex_hull(np.zeros((5, 2)))
    bad = np.random.default_rng(0).normal(size=(6, 3))
    bad[2, 1] = np.nan
    with pytest.raises(ValueError):
        convex_hull(bad)


@given(point_clouds, st.integers(0, 2**31 - 1))
def test_hull_invariant_under_rigid_motion(pts, seed):
    rng = np.random.default_rng(seed)
    R = Rotation.random(random_state=seed).as_matrix()
    moved = pts @ R.T + rng.normal(size=3) * 10
    a, b = convex_hull(pts), convex_hull(moved)
    assert b.volume == pytest.approx(a.volume, rel=1e-9)
    assert b.surface_area == pytest.approx(a.surface_area, rel=1e-9)


@given(point_clouds, st.integers(0, 2**31 - 1))
def test_hull_volume_monotone_under_insertion(pts, seed):
    extra = np.random.default_rng(seed).normal(size=(1, 3)) * 3
    assert convex_hull(np.vstack([pts, extra])).volume >= convex_hull(pts).volume * (1 - 1e-12)


def _hull(v, s):
    return HullResult(v, s, np.arange(4))


def test_cqi_examples():
    assert compute_cqi(_hull(DEBRIS.volume, DEBRIS.surface_area), DEBRIS, 0.0) == 0.0
    assert abs(compute_cqi(_hull(DEBRIS.volume, DEBRIS.surface_area), DEBRIS, DEBRIS.l_c) - 0.8) <= 1e-12
    assert abs(compute_cqi(_hull(2 * DEBRIS.volume, DEBRIS.surface_area), DEBRIS, 0.0) - 0.1) <= 1e-12


@given(st.floats(0, 1e4), st.floats(0, 1e4), st.floats(0, 100))
def test_cqi_is_non_negative(v, s, q):
    assert compute_cqi(_hull(v, s), DEBRIS, q) >= 0.0


def test_fuel_constant_thrust_closed_form():
    dt = 1e-3
    n = int(round(25.0 / dt)) + 1
    direction = np.array([2.0, -1.0, 2.0]) / 3.0
    hist = np.broadcast_to(6.1 * direction, (n, 4, 3))
    m = integrate_fuel(hist, 277.0, dt)
    expected = 4 * 6.1 * 25 / (9.81 * 277)
    assert expected == pytest.approx(0.22448, abs=5e-6)
    assert m == pytest.approx(expected, rel=1e-3)
    assert integrate_fuel(np.zeros((10, 4, 3)), 277.0, dt) == 0.0


def test_objective_examples():
    cfg = ObjectiveConfig()
    tension = objective_value(50.0, 0, 0.1, True, cfg)
    assert tension == pytest.approx(math.log(47.5**2 + 1) + math.log(145) + cfg.beta, abs=1e-12)
    assert tension - cfg.beta == pytest.approx(12.6989, abs=1e-3)
    assert objective_value(3.0, 12, 0.1, False, cfg) == pytest.approx(math.log(1.25) + cfg.beta, abs=1e-12)
    assert objective_value(2.0, 12, 0.1, False, cfg) == 0.1


@given(st.floats(0, 100), st.integers(0, 12), st.floats(0, 1), st.booleans())
def test_failures_score_at_least_beta(cqi, n_locked, m_prop, tension_failed):
    cfg = ObjectiveConfig()
    f = objective_value(cqi, n_locked, m_prop, tension_failed, cfg)
    if is_success(cqi, n_locked, tension_failed, cfg):
        assert f == m_prop
    else:
        assert f >= cfg.beta
        assert f - cfg.beta == pytest.approx(failure_penalty(cqi, n_locked, cfg))


def test_beta_calibration():
    assert calibrate_beta([0.1, 0.4, 0.2]) == pytest.approx(0.6)
    assert calibrate_beta([]) == DEFAULT_BETA
    with pytest.raises(ValueError):
        ObjectiveConfig(beta=0.0)
