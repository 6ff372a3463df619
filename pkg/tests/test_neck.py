import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from alphaneck.domain import MapField, build_polar_grid
from alphaneck.errors import DegenerateSpeed, NoNeck
from alphaneck.manifold import Ellipsoid, UnitSphere
from alphaneck.neck import (circle_average, geodesic_residual, log_profile_fit,
                            neck_length_report, oscillation_profile, point_set_diameter,
                            unit_speed_resample, write_neck_csv)
from alphaneck.oracles import (SyntheticFamilyParams, bubble_map, equator_map, fill,
                               log_neck_map, synthetic_neck_family)

S = UnitSphere(3)
NECK_GRID = build_polar_grid((0, 0), 1e-4, 1.0, 128, 32)


def const_field(grid, c=(0.0, 0.6, 0.8)):
    return MapField(grid, np.broadcast_to(np.asarray(c), grid.shape + (3,)).copy(), S)


def great_circle(n, span=2.0):
    s = np.linspace(0, span, n)
    return np.stack([np.cos(s), np.sin(s) * 0.6, np.sin(s) * 0.8], -1)


def test_circle_average_constant():
    c = circle_average(const_field(NECK_GRID))
    assert np.allclose(c.omega, [0.0, 0.6, 0.8], atol=1e-15)
    assert np.all(c.arc_length == 0)


def test_circle_average_equator():
    g = build_polar_grid((0, 0), 0.25, 1.0, 32, 64)
    c = circle_average(fill(g, equator_map(0.25, 1.0)))
    assert np.max(np.abs(c.omega)) < 1e-15
    assert np.allclose(c.max_ring_oscillation, 2.0)
    assert np.all(c.off_manifold(S) > 0.99)


def test_arc_length_nondecreasing_bubble():
    g = build_polar_grid((0, 0), 1e-3, 3.0, 64, 64)
    c = circle_average(fill(g, bubble_map(0.1)))
    assert np.all(np.diff(c.arc_length) >= 0)


@settings(max_examples=20, deadline=None)
@given(st.floats(0.01, 0.3), st.floats(1.01, 1.3))
def test_small_oscillation_means_near_manifold(a, alpha):
    # a theta-independent curve plus a small angular wobble
    neck = log_neck_map((1, 0, 0), (0, a, 0), alpha)
    g = build_polar_grid((0, 0), 1e-3, 1.0, 32, 32)
    P = g.positions()
    th = np.arctan2(P[..., 1], P[..., 0])
    v = S.project(neck(P) + 1e-3 * np.stack([0 * th, 0 * th, np.cos(th)], -1))
    c = circle_average(MapField(g, v, S))
    osc = c.max_ring_oscillation.max()
    assert osc < 3e-3
    assert np.all(c.off_manifold(S) <= osc)


def test_log_neck_average_is_curve():
    neck = log_neck_map((1, 0, 0), (0, 0.3, 0), 1.05)
    c = circle_average(fill(NECK_GRID, neck))
    assert np.max(np.abs(c.omega - neck.curve(NECK_GRID.radii))) < 1e-10


def test_log_profile_fit_recovers_vector():
    a0 = np.array([0.0, 0.3, 0.0])
    # junction point y sits on the fit ring r_t = lambda^t
    u = fill(NECK_GRID, log_neck_map((1, 0, 0), a0, 1.05, r_ref=1e-3 ** 0.5))
    fit = log_profile_fit(u, 0.5, 1e-3, 1.25, 1.05)
    assert np.linalg.norm(fit.a_vec - a0) < 0.02 * np.linalg.norm(a0)
    assert fit.fit_rms < 1e-3


def test_log_profile_fit_with_noise():
    a0 = np.array([0.0, 0.3, 0.0])
    u = fill(NECK_GRID, log_neck_map((1, 0, 0), a0, 1.05, r_ref=1e-3 ** 0.5))
    rng = np.random.default_rng(4)
    v = S.project(u.values + 1e-3 * np.sqrt(0.05) * rng.normal(size=u.values.shape))
    fit = log_profile_fit(u.with_values(v), 0.5, 1e-3, 1.25, 1.05)
    assert np.linalg.norm(fit.a_vec - a0) < 0.05 * np.linalg.norm(a0)


def test_log_profile_fit_constant_is_no_neck():
    with pytest.raises(NoNeck):
        log_profile_fit(const_field(NECK_GRID), 0.5, 1e-3, 2.0, 1.05, mu_hat=1.0,
                        bubble_energy=8 * np.pi)


def test_geodesic_residual_great_circle():
    r = geodesic_residual(great_circle(64), S)
    assert r.sup < 1e-4


def test_geodesic_residual_projected_chord():
    # a chord through the interior, projected, is a great-circle arc
    t = np.linspace(-1, 1, 256)[:, None]
    chord = np.array([0.9, 0.1, 0.0]) * (1 - t) + np.array([-0.2, 0.7, 0.5]) * t
    assert geodesic_residual(chord, S).sup < 1e-3


def test_geodesic_residual_detects_small_circle():
    s = np.linspace(0, 2.0, 64)
    lat = np.stack([0.6 * np.cos(s), 0.6 * np.sin(s), 0.8 + 0 * s], -1)
    # a latitude circle at height 0.8 has geodesic curvature 0.8 / 0.6
    r = geodesic_residual(lat, S)
    assert r.rms == pytest.approx(0.8 / 0.6, rel=1e-3)


def test_geodesic_residual_constant_curve():
    with pytest.raises(DegenerateSpeed):
        geodesic_residual(np.tile([0.0, 0.0, 1.0], (20, 1)), S)


def test_geodesic_residual_ellipsoid():
    E = Ellipsoid((2.0, 1.0, 1.0))
    p = E.project(np.array([1.0, 0.8, 0.3]))
    v = E.tangent_project(p, np.array([0.3, -0.5, 1.0]))
    pts = E.geodesic(p, v, np.linspace(0, 1.5, 64))
    assert geodesic_residual(pts, E).sup < 1e-3


def test_unit_speed_resample():
    sigma, pts, steps = unit_speed_resample(great_circle(50), 40)
    assert np.allclose(steps, steps.mean(), rtol=1e-9)
    assert np.allclose(np.linalg.norm(pts, axis=-1), 1, atol=1e-12)


def test_length_no_neck():
    c = circle_average(const_field(NECK_GRID))
    with pytest.raises(NoNeck):
        neck_length_report(c, 1.0, 8 * np.pi, 1e-3, 0.3, 0.7)


def test_full_band_length_constant_speed_family():
    # constant neck speed sqrt(E/pi): the nearly full band approaches sqrt(E/pi) log nu
    # once the bubble tail excursion is small against the neck
    p = SyntheticFamilyParams(lam=1e-6, calibrated=False, a_vec=None)
    u, fam = synthetic_neck_family(p, build_polar_grid((0, 0), 1e-8, 1.0, 768, 64))
    rep = neck_length_report(circle_average(u), fam.nu_hat, fam.bubble_energy, fam.lam, 0.02, 0.98)
    assert 0.98 <= rep.ratio <= 1.02


def test_oscillation_profile():
    g = build_polar_grid((0, 0), 1e-2, 1.0, 64, 64)
    assert np.all(oscillation_profile(const_field(g)).osc == 0)
    eq = build_polar_grid((0, 0), 0.125, 1.0, 48, 64)
    assert np.allclose(oscillation_profile(fill(eq, equator_map(0.125, 1.0))).osc, 2.0, atol=1e-2)
    # bubble tail: |u - pole| ~ 2 lam / r, so dyadic oscillations halve
    tail = build_polar_grid((0, 0), 0.01, 2.56, 128, 64)
    osc = oscillation_profile(fill(tail, bubble_map(0.01)), base_radius=0.04).osc
    ratios = osc[1:-1] / osc[:-2]
    assert np.all(ratios < 0.75)


def test_point_set_diameter():
    X = np.array([[0, 0, 1.0], [0, 0, -1.0], [0.5, 0.5, 0]])
    assert point_set_diameter(X) == pytest.approx(2.0)


def test_write_neck_csv(tmp_path):
    c = circle_average(fill(NECK_GRID, log_neck_map((1, 0, 0), (0, 0.3, 0), 1.05)))
    write_neck_csv(c, tmp_path / "neck.csv")
    lines = (tmp_path / "neck.csv").read_text().splitlines()
    assert len(lines) == NECK_GRID.shape[0] + 1
