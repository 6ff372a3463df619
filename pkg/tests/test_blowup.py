import numpy as np
import pytest
from hypothesis import given, strategies as st

from alphaneck.blowup import (BlowupRecord, NoBlowup, check_bubble_separation, detect_blowup,
                              detect_sites, energy_identity_report, estimate_mu_nu, make_record,
                              map_degree, rescale_bubble, write_identity_table)
from alphaneck.domain import MapField, build_torus_grid
from alphaneck.errors import BelowResolution, DegreeAmbiguous
from alphaneck.manifold import UnitSphere
from alphaneck.oracles import NORTH, blend_to_constant, bubble_map, fill

S = UnitSphere(3)
# 30-digit reference values of 10^0.3 and 10^(3 sqrt 0.05)
MU_REF = 1.99526231496887960135
NU_REF = 4.68619539850304209279


def const_field(grid):
    return MapField(grid, np.broadcast_to(NORTH, grid.shape + (3,)).copy(), S)


def torus_bubble(n, lam, c=(0.5, 0.5), degree=1, blend=(0.3, 0.45)):
    g = build_torus_grid(n, 1.0)
    P = g.positions()
    vals = blend_to_constant(bubble_map(lam, c, degree)(P), P, c, blend[0], blend[1], NORTH, S)
    return MapField(g, vals, S)


def test_constant_map_no_blowup():
    res = detect_blowup(const_field(build_torus_grid(32, 1.0)))
    assert isinstance(res, NoBlowup) and not res
    assert res.lambda_alpha == np.inf


def test_detect_single_bubble():
    u = torus_bubble(256, 0.05, c=(0.5, 0.5))
    site = detect_blowup(u)
    x, lam = site
    assert np.all(np.abs(np.asarray(x) - 0.5) <= u.grid.h + 1e-12)
    # 1 / max |grad u| with max |grad u| = 2 sqrt 2 / lambda
    assert lam == pytest.approx(0.05 / (2 * np.sqrt(2)), rel=0.1)


def test_two_bubbles_returns_smaller_scale():
    g = build_torus_grid(256, 1.0)
    P = g.positions()
    v = blend_to_constant(bubble_map(0.05, (0.25, 0.5))(P), P, (0.25, 0.5), 0.15, 0.24, NORTH, S)
    w = blend_to_constant(bubble_map(0.1, (0.75, 0.5))(P), P, (0.75, 0.5), 0.15, 0.24, NORTH, S)
    near = np.linalg.norm(P - [0.25, 0.5], axis=-1) < 0.25
    u = MapField(g, np.where(near[..., None], v, w), S)
    x, lam = detect_blowup(u)
    assert np.allclose(x, (0.25, 0.5), atol=g.h)
    sites = detect_sites(u, 2)
    assert len(sites) == 2 and np.allclose(sites[0].x_alpha, (0.25, 0.5), atol=g.h)
    assert np.allclose(sites[1].x_alpha, (0.75, 0.5), atol=g.h)


def test_rescale_exact_bubble():
    u = torus_bubble(256, 0.05)
    x, lam = detect_blowup(u)
    ext = rescale_bubble(u, x, lam, R=4.0)
    assert ext.comparison_error < 1e-3
    assert not ext.not_a_bubble
    assert ext.energy_in_R == pytest.approx(bubble_map(0.05).energy_in_ball(4.0 * lam), rel=0.01)


def test_rescale_constant_map():
    u = const_field(build_torus_grid(64, 1.0))
    try:
        ext = rescale_bubble(u, (0.5, 0.5), 0.05, R=4.0)
    except BelowResolution:
        return
    assert ext.comparison_error >= 0.5 and ext.not_a_bubble


def test_estimate_mu_nu():
    mu, nu = estimate_mu_nu(1e-3, 1.05)
    assert mu == pytest.approx(MU_REF, rel=1e-13)
    assert nu == pytest.approx(NU_REF, rel=1e-13)
    assert estimate_mu_nu(1.0, 1.3) == (1.0, 1.0)
    mu, nu = estimate_mu_nu(1e-3, 1 + 1e-12)
    assert abs(mu - 1) < 1e-9 and abs(nu - 1) < 1e-4
    with pytest.raises(ValueError):
        estimate_mu_nu(2.0, 1.1)


@given(st.floats(1e-8, 1.0), st.floats(1.0001, 2.0), st.floats(1e-4, 0.5))
def test_mu_nu_monotone(lam, alpha, da):
    mu, nu = estimate_mu_nu(lam, alpha)
    assert mu >= 1 and nu >= 1
    mu2, nu2 = estimate_mu_nu(lam, alpha + da)
    assert mu2 >= mu * (1 - 1e-14) and nu2 >= nu * (1 - 1e-14)


def test_map_degree():
    assert map_degree(const_field(build_torus_grid(64, 1.0))).degree == 0
    g = build_torus_grid(64, 1.0)
    x = g.positions()[..., 0]
    eq = np.stack([np.cos(2 * np.pi * x), np.sin(2 * np.pi * x), 0 * x], -1)
    assert map_degree(MapField(g, eq, S)).degree == 0
    d = map_degree(torus_bubble(128, 0.25, blend=(0.3, 0.49)))
    assert d.degree == 1 and abs(d.raw - 1) < 0.01
    assert map_degree(torus_bubble(256, 0.08, degree=2)).degree == 2


def test_degree_ambiguous():
    # a bubble cut off inside its core leaves a fractional winding
    u = torus_bubble(64, 0.5, blend=(0.2, 0.25))
    try:
        d = map_degree(u, ambiguity=0.05)
    except DegreeAmbiguous as exc:
        assert 0.05 < abs(exc.raw - round(exc.raw)) <= 0.5
    else:
        assert abs(d.raw - d.degree) <= 0.05


def test_bubble_separation():
    lab = check_bubble_separation([((0.0, 0.0), 0.01), ((0.5, 0.0), 0.01)])
    assert lab[(0, 1)] == "H1"
    assert check_bubble_separation([((0, 0), 0.001), ((0, 0), 0.1)])[(0, 1)] == "H2"
    assert check_bubble_separation([((0, 0), 0.01), ((0, 0), 0.012)])[(0, 1)] == "SameBubble"


def test_record_estimators():
    u = torus_bubble(128, 0.05)
    rec = make_record(u, 1.05, 1.0)
    assert rec.has_bubble
    assert rec.grad_pow ** 2 == pytest.approx(rec.mu_hat, rel=1e-10)
    assert rec.mu_hat >= 1 and rec.nu_hat >= 1
    assert rec.degree == 1
    d = rec.to_dict()
    assert d["alpha"] == 1.05


def test_identity_report_constant(tmp_path):
    u = const_field(build_torus_grid(32, 1.0))
    recs = [make_record(u, a, 1.0) for a in (1.2, 1.1)]
    rep = energy_identity_report(recs, 8 * np.pi, 0.0, 1.0)
    assert np.all(rep.defects == 0.0)
    write_identity_table(rep, tmp_path / "id.csv")
    head = (tmp_path / "id.csv").read_text().splitlines()[0]
    assert head == "alpha,E_alpha,mu_hat,nu_hat,defect,rel_defect"


def test_identity_report_with_bubble():
    rec = BlowupRecord(1.05, 1.0, (0.5, 0.5), 1e-3, MU_REF, NU_REF, MU_REF ** 0.5, 60.0, 50.0,
                       1, 1.0, 25.0, 1.2, 1e3, 1e-3)
    rep = energy_identity_report([rec], 8 * np.pi, 0.0, 1.0)
    assert rep.rows[0].defect == pytest.approx(60.0 - 1.0 - MU_REF ** 2 * 8 * np.pi, rel=1e-14)


def test_record_final_torus_stage(torus_run):
    _, res = torus_run
    rec = res.records[-1]
    # a single degree-1 bubble: energy over B_8 of the unit bubble, 8 pi 64/65
    assert rec.bubble_energy_hat == pytest.approx(8 * np.pi * 64 / 65, rel=0.15)
