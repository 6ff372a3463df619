"""Acceptance suite: one PASS/FAIL line per criterion, listed in the terminal summary."""
import filecmp
import time
from pathlib import Path

import numpy as np
import pytest

from alphaneck.blowup import energy_identity_report
from alphaneck.cli import run_experiment
from alphaneck.domain import MapField, TorusGrid, build_polar_grid, dirichlet_ring, resample_to_polar
from alphaneck.energy import (alpha_energy, alpha_energy_gradient, boundary_variational_identity,
                              circle_average_inequality_check, el_residual, energy_and_gradient,
                              pohozaev_identity, radial_energy_profile)
from alphaneck.errors import DegenerateSpeed
from alphaneck.manifold import Ellipsoid, UnitSphere
from alphaneck.neck import circle_average, geodesic_residual, log_profile_fit, neck_length_report
from alphaneck.oracles import (bubble_map, equator_map, extrapolated_bubble_energy, fill,
                               synthetic_neck_family)
from alphaneck.solver import SolveOptions, minimize_alpha_energy

from conftest import ACCEPTANCE_LINES, random_sphere_field

S = UnitSphere(3)
CONFIGS = Path(__file__).resolve().parents[1] / "configs"
EIGHT_PI = 8 * np.pi

# tolerances
BUBBLE_REL, EQUATOR_REL = 0.01, 0.01
GRAD_REL = 1e-6
EL_ORDER = 1.8
IDENTITY_REL = 0.05
NORM_REL = 0.02
LENGTH_BAND = (0.98, 1.02)
F_REL = 0.10
DEFECT_REL = 0.05
GRAD_POW_REL = 1e-10
GREAT_CIRCLE_SUP = 1e-4
ELLIPSOID_SUP = 1e-3


def check(name, ok, detail, t0):
    line = f"{'PASS' if ok else 'FAIL'}  {name}: {detail}  [{time.time() - t0:.1f}s]"
    ACCEPTANCE_LINES.append(line)
    print(line)
    assert ok, line


def test_c1_oracle_energies():
    t0 = time.time()
    E_inf, _, _ = extrapolated_bubble_energy(bubble_map(1.0), 4.0, 128, 256)
    g = build_polar_grid((0, 0), 0.25, 1.0, 64, 128)
    E_eq = alpha_energy(fill(g, equator_map(0.25, 1.0)), 1.0, 0.0).dirichlet_energy
    rb, re = E_inf / EIGHT_PI - 1, E_eq / (2 * np.pi * np.log(4)) - 1
    check("1 oracle energies", abs(rb) < BUBBLE_REL and abs(re) < EQUATOR_REL,
          f"bubble {E_inf:.5f} (rel {rb:+.2e}), equator {E_eq:.5f} (rel {re:+.2e})", t0)


def test_c2_gradient_fd():
    t0 = time.time()
    rng = np.random.default_rng(2024)
    grid = TorusGrid(8, 1.0)
    combos = [(a, e) for a in (1.0, 1.1, 1.5) for e in (0.0, 0.5, 1.0)]
    worst, h = 0.0, 1e-6
    for k in range(20):
        alpha, eps = combos[k % len(combos)]
        u = random_sphere_field(grid, rng)
        _, g_amb, _ = energy_and_gradient(u, alpha, eps)
        xi = S.tangent_project(u.values, rng.normal(size=u.values.shape))
        exact = np.sum(g_amb * xi)
        fd = (alpha_energy(u.with_values(u.values + h * xi), alpha, eps).total_alpha_energy
              - alpha_energy(u.with_values(u.values - h * xi), alpha, eps).total_alpha_energy) / (2 * h)
        worst = max(worst, abs(fd - exact) / abs(exact))
    check("2 gradient finite differences", worst < GRAD_REL,
          f"max relative error {worst:.2e} over 20 fields", t0)


def test_c3_el_order():
    t0 = time.time()
    bub, eq = [], []
    for n in (32, 64, 128):
        g = build_polar_grid((0, 0), 1e-3, 3.0, 2 * n, 2 * n)
        bub.append(el_residual(fill(g, bubble_map(1.0)), 1.0, 0.0)[1])
        g = build_polar_grid((0.1, 0.05), 0.3, 1.0, n, 2 * n)
        eq.append(el_residual(fill(g, equator_map(0.25, 1.2)), 1.0, 0.0)[1])
    ob = np.log2(np.array(bub[:-1]) / bub[1:])
    oe = np.log2(np.array(eq[:-1]) / eq[1:])
    check("3 EL residual order", min(ob.min(), oe.min()) >= EL_ORDER,
          f"bubble orders {np.round(ob, 3).tolist()}, equator orders {np.round(oe, 3).tolist()}", t0)


def test_c4_identities_on_solve():
    t0 = time.time()
    g = build_polar_grid((0, 0), 0.25, 1.0, 64, 128)
    P = g.positions()
    r, th = np.hypot(P[..., 0], P[..., 1]), np.arctan2(P[..., 1], P[..., 0])
    f = 1.0 + np.log(r / 0.25) / np.log(4)
    u = MapField(g, np.stack([np.sin(f) * np.cos(th), np.sin(f) * np.sin(th), np.cos(f)], -1), S,
                 dirichlet_ring())
    w, rep = minimize_alpha_energy(u, 1.05, 1.0, SolveOptions(grad_tol=1e-8))
    el = el_residual(w, 1.05, 1.0)[1]
    worst = 0.0
    for t in (0.3, 0.4, 0.5, 0.7, 0.9, 1.0):
        for fn in (pohozaev_identity, boundary_variational_identity):
            worst = max(worst, fn(w, 1.05, 1.0, t).relative)
    check("4 Pohozaev and boundary identities", el < 1e-6 and worst < IDENTITY_REL,
          f"el l2 {el:.1e}, max |residual|/normalizer {worst:.2e}", t0)


def test_c5_circle_average_inequality():
    t0 = time.time()
    rng = np.random.default_rng(5)
    g = build_polar_grid((0, 0), 0.1, 1.0, 16, 16)
    bad = 0
    for _ in range(1000):
        u = MapField(g, S.project(rng.normal(size=g.shape + (3,))), S)
        lhs, rhs = circle_average_inequality_check(u)
        bad += lhs > rhs + 1e-12
        for ri in g.radii[::5]:
            lhs, rhs = circle_average_inequality_check(u, (ri, ri))
            bad += lhs > rhs + 1e-12
    check("5 circle-average inequality", bad == 0, f"{bad} violations over 1000 fields", t0)


@pytest.fixture(scope="module")
def calibrated():
    _, fam = synthetic_neck_family()
    u, fam = synthetic_neck_family(grid=fam.default_grid())
    return u, fam


def test_c6a_profile_norm(calibrated):
    t0 = time.time()
    u, fam = calibrated
    fit = log_profile_fit(u, 0.5, fam.lam, 1.25, 1.05, fam.mu_hat, fam.bubble_energy)
    target = fam.mu_hat ** (1 - fit.t_ring) * 2 * np.sqrt(2)
    rel = fit.a_norm / target - 1
    check("6a log-profile norm", abs(rel) < NORM_REL,
          f"|a| {fit.a_norm:.5f} vs {target:.5f} (rel {rel:+.2e})", t0)


def test_c6b_neck_length(calibrated):
    t0 = time.time()
    u, fam = calibrated
    rep = neck_length_report(circle_average(u), fam.nu_hat, fam.bubble_energy, fam.lam, 0.3, 0.7,
                             fam.mu_hat)
    ok = LENGTH_BAND[0] <= rep.ratio <= LENGTH_BAND[1]
    check("6b neck length", ok,
          f"ratio {rep.ratio:.4f} (against the mu-weighted length: {rep.ratio_mu:.4f})", t0)


def test_c6c_energy_profile(calibrated):
    t0 = time.time()
    u, fam = calibrated
    ts = np.linspace(0.3, 0.7, 9)
    prof = radial_energy_profile(u, 1.05, 1.0, ts, fam.lam)
    lam_hat = fam.mu_hat * fam.bubble_energy
    dev = np.max(np.abs(prof.F - fam.mu_hat ** (1 - ts) * lam_hat)) / lam_hat
    check("6c energy profile law", dev < F_REL, f"max relative deviation {dev:.3e}", t0)


def test_c6d_identity_defect(calibrated):
    t0 = time.time()
    u, fam = calibrated
    E = alpha_energy(u, 1.05, 1.0).total_alpha_energy
    d = E - 0.0 - u.grid.measure - fam.mu_hat ** 2 * fam.bubble_energy
    check("6d energy identity defect", abs(d) / E < DEFECT_REL,
          f"|defect|/E_alpha {abs(d) / E:.3e} (E_alpha {E:.4f})", t0)


def _torus_curves(res):
    out = []
    for rec, u in zip(res.records, res.fields):
        lam = rec.lambda_alpha
        r_out = min(0.45, max(lam ** 0.27, 4 * lam))
        pg = build_polar_grid(rec.x_alpha, 0.02 * lam, r_out, 256, 128)
        out.append((rec, circle_average(resample_to_polar(u, pg, order=3))))
    return out


def test_c7_lambda_decreasing(torus_run):
    t0 = time.time()
    _, res = torus_run
    lams = [r.lambda_alpha for r in res.records]
    ok = len(lams) == 5 and all(b < a for a, b in zip(lams, lams[1:]))
    check("7 lambda_alpha strictly decreasing", ok, f"{np.round(lams, 5).tolist()}", t0)


def test_c7_degree(torus_run):
    t0 = time.time()
    _, res = torus_run
    degs = [r.degree for r in res.records]
    check("7 degree one", all(d == 1 for d in degs), f"degrees {degs}, halt {res.halt_reason}", t0)


def test_c7_grad_pow(torus_run):
    t0 = time.time()
    _, res = torus_run
    worst = max(abs(r.grad_pow ** 2 / r.mu_hat - 1) for r in res.records)
    check("7 grad_pow^2 = mu_hat", worst < GRAD_POW_REL, f"max relative gap {worst:.1e}", t0)


def test_c7_defect_trend(torus_run):
    t0 = time.time()
    _, res = torus_run
    rep = energy_identity_report(res.records, EIGHT_PI, 0.0, 1.0)
    tail = np.abs(rep.defects[-3:])
    check("7 defect magnitude nonincreasing", bool(np.all(np.diff(tail) <= 0)),
          f"|defect| over the last three {np.round(tail, 4).tolist()}", t0)


def test_c7_geodesic_trend(torus_run):
    t0 = time.time()
    _, res = torus_run
    vals, notes = [], []
    for rec, curve in _torus_curves(res)[-3:]:
        band = (rec.lambda_alpha ** 0.7, rec.lambda_alpha ** 0.3)
        try:
            vals.append(geodesic_residual(curve, S, band=band).rms)
        except DegenerateSpeed as exc:
            axis = np.max(np.abs(curve.omega[curve.band(*band)][:, :2]))
            notes.append(f"alpha={rec.alpha}: DegenerateSpeed ({exc}; max off-axis {axis:.1e})")
    ok = len(vals) == 3 and all(b <= a for a, b in zip(vals, vals[1:]))
    check("7 geodesic residual nonincreasing", ok, "; ".join(notes) or f"residuals {vals}", t0)


def test_c8_geodesic_calibration():
    t0 = time.time()
    s = np.linspace(0, 2.0, 64)
    arc = np.stack([np.cos(s), 0.6 * np.sin(s), 0.8 * np.sin(s)], -1)
    sup_s = geodesic_residual(arc, S).sup
    E = Ellipsoid((2.0, 1.0, 1.0))
    sup_e = 0.0
    rng = np.random.default_rng(8)
    for _ in range(5):
        p = E.project(rng.normal(size=3))
        v = E.tangent_project(p, rng.normal(size=3))
        v *= 1.5 / np.linalg.norm(v)
        pts = E.geodesic(p, v, np.linspace(0, 1, 64))
        assert np.allclose(pts[-1], E.exp_map(p, v), atol=1e-7)
        sup_e = max(sup_e, geodesic_residual(pts, E).sup)
    check("8 geodesic residual calibration", sup_s < GREAT_CIRCLE_SUP and sup_e < ELLIPSOID_SUP,
          f"great circle sup {sup_s:.1e}, ellipsoid sup {sup_e:.1e}", t0)


def test_c9_determinism(tmp_path):
    t0 = time.time()
    a, b = tmp_path / "a", tmp_path / "b"
    assert run_experiment(CONFIGS / "synthetic_identity.ini", a) == 0
    assert run_experiment(CONFIGS / "synthetic_identity.ini", b) == 0
    csvs = sorted(p.name for p in a.glob("*.csv"))
    same = [filecmp.cmp(a / n, b / n, shallow=False) for n in csvs]
    check("9 determinism", len(csvs) >= 4 and all(same), f"{sum(same)}/{len(csvs)} CSVs identical", t0)
