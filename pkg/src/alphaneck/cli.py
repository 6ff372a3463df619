"""Experiment runner: ``alphaneck run|validate|report``.

Configs are INI files; a key ``n`` in section ``[grid]`` is addressed as
``grid.n`` in error messages.  Every run writes CSV tables plus a
``metrics.csv`` (name, value); ``summary.json`` is rendered from those files
only, so ``report`` reproduces it from a run directory.
"""
from __future__ import annotations

import argparse
import configparser
import csv
import json
import math
import os
import sys
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import __version__
from .blowup import (BlowupRecord, check_bubble_separation, detect_sites, energy_identity_report,
                     estimate_mu_nu, write_identity_table)
from .domain import build_polar_grid, build_torus_grid, resample_to_polar
from .energy import alpha_energy, radial_energy_profile
from .errors import AlphaNeckError, ConfigInvalid, DegenerateSpeed, NoNeck
from .manifold import make_manifold
from .neck import circle_average, geodesic_residual, log_profile_fit, neck_length_report
from .oracles import (SyntheticFamilyParams, bubble_map, equator_map, extrapolated_bubble_energy,
                      fill, quadrature_oracle, synthetic_neck_family)
from .solver import (ContinuationSchedule, JsonlLog, SolveOptions, continuation_run,
                     initial_degree_one_map)

KINDS = ("TorusContinuation", "SyntheticIdentitySuite", "OracleValidation")
FLOAT_FMT = "%.17g"


def fmt(v) -> str:
    if v is None:
        return ""
    if isinstance(v, str):
        return v
    if isinstance(v, (bool, np.bool_)):
        return "true" if v else "false"
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    return FLOAT_FMT % float(v)


# -- config parsing -------------------------------------------------------------

class _Cfg:
    """Typed access to an INI file with dotted field names for errors."""

    def __init__(self, parser: configparser.ConfigParser):
        self.p = parser

    def _raw(self, key, default):
        sec, name = key.split(".", 1)
        if self.p.has_option(sec, name):
            return self.p.get(sec, name).strip()
        if default is _REQUIRED:
            raise ConfigInvalid(key, "missing")
        return default

    def str(self, key, default=None):
        return self._raw(key, default)

    def float(self, key, default=None, lo=None, hi=None, strict_lo=False):
        raw = self._raw(key, default)
        if raw is None:
            return None
        try:
            v = float(raw)
        except (TypeError, ValueError):
            raise ConfigInvalid(key, f"not a number: {raw!r}") from None
        if not math.isfinite(v):
            raise ConfigInvalid(key, "must be finite")
        if lo is not None and (v < lo or (strict_lo and v == lo)):
            raise ConfigInvalid(key, f"must be {'>' if strict_lo else '>='} {lo}")
        if hi is not None and v > hi:
            raise ConfigInvalid(key, f"must be <= {hi}")
        return v

    def int(self, key, default=None, lo=None):
        raw = self._raw(key, default)
        if raw is None:
            return None
        try:
            v = int(str(raw))
        except ValueError:
            raise ConfigInvalid(key, f"not an integer: {raw!r}") from None
        if lo is not None and v < lo:
            raise ConfigInvalid(key, f"must be >= {lo}")
        return v

    def bool(self, key, default=None):
        raw = self._raw(key, default)
        if isinstance(raw, bool):
            return raw
        s = str(raw).lower()
        if s in ("1", "true", "yes", "on"):
            return True
        if s in ("0", "false", "no", "off"):
            return False
        raise ConfigInvalid(key, f"not a boolean: {raw!r}")

    def floats(self, key, default=None, n=None):
        raw = self._raw(key, default)
        if raw is None:
            return None
        if isinstance(raw, (list, tuple)):
            vals = [float(x) for x in raw]
        else:
            try:
                vals = [float(x) for x in str(raw).replace(";", ",").split(",") if x.strip()]
            except ValueError:
                raise ConfigInvalid(key, f"not a list of numbers: {raw!r}") from None
        if not vals or (n is not None and len(vals) != n):
            raise ConfigInvalid(key, f"expected {n or 'some'} comma-separated numbers")
        return vals


_REQUIRED = object()


@dataclass
class ExperimentConfig:
    kind: str
    seed: int
    out_dir: Path
    params: dict = field(default_factory=dict)
    manifold: object = None


def _manifold(c: _Cfg):
    kind = c.str("manifold.kind", "sphere")
    if kind.lower() not in ("sphere", "ellipsoid"):
        raise ConfigInvalid("manifold.kind", f"unknown kind {kind!r}")
    dim = c.int("manifold.ambient_dim", "3", lo=2)
    axes = c.floats("manifold.axes", None)
    if kind.lower() == "ellipsoid" and (axes is None or len(axes) != dim or min(axes) <= 0):
        raise ConfigInvalid("manifold.axes", "ellipsoid needs ambient_dim positive semi-axes")
    tol = c.float("manifold.proj_tol", None, lo=0.0, strict_lo=True)
    theta = c.float("manifold.known_min_bubble_energy", None, lo=0.0, strict_lo=True)
    return make_manifold(kind, dim, axes, tol, theta)


def _solver_options(c: _Cfg) -> SolveOptions:
    o = SolveOptions(
        max_iters=c.int("solver.max_iters", "20000", lo=0),
        grad_tol=c.float("solver.grad_tol", "1e-6", lo=0.0, strict_lo=True),
        armijo=c.float("solver.armijo", "1e-4", lo=0.0, hi=0.5, strict_lo=True),
        shrink=c.float("solver.shrink", "0.5", lo=0.0, hi=1.0, strict_lo=True),
        initial_step=c.float("solver.initial_step", "1.0", lo=0.0, strict_lo=True),
        momentum=c.float("solver.momentum", "0.0", lo=0.0),
        preconditioner=c.str("solver.preconditioner", "h1"),
        log_every=c.int("solver.log_every", "100", lo=1),
    )
    if o.shrink >= 1:
        raise ConfigInvalid("solver.shrink", "must be < 1")
    if o.momentum >= 1:
        raise ConfigInvalid("solver.momentum", "must be < 1")
    if o.preconditioner not in ("h1", "none"):
        raise ConfigInvalid("solver.preconditioner", "must be h1 or none")
    return o


def _band(c: _Cfg):
    t2 = c.float("analysis.t2", "0.3")
    t1 = c.float("analysis.t1", "0.7")
    if not 0 < t2 < 1:
        raise ConfigInvalid("analysis.t2", "must lie in (0, 1)")
    if not t2 < t1 < 1:
        raise ConfigInvalid("analysis.t1", "must lie in (t2, 1)")
    return t2, t1


def load_config(path, out_override=None) -> ExperimentConfig:
    path = Path(path)
    parser = configparser.ConfigParser(interpolation=None)
    try:
        with open(path) as fh:
            parser.read_file(fh)
    except FileNotFoundError:
        raise ConfigInvalid("config", f"file not found: {path}") from None
    except configparser.Error as exc:
        raise ConfigInvalid("config", f"parse error: {exc}") from None
    c = _Cfg(parser)
    kind = c.str("experiment.kind", _REQUIRED)
    if kind not in KINDS:
        raise ConfigInvalid("experiment.kind", f"must be one of {', '.join(KINDS)}")
    seed = c.int("experiment.seed", "0", lo=0)
    p: dict = {}
    man = _manifold(c)
    if kind == "TorusContinuation":
        p["n"] = c.int("grid.n", _REQUIRED)
        if p["n"] < 16:
            raise ConfigInvalid("grid.n", "must be >= 16")
        p["side"] = c.float("grid.side", _REQUIRED, lo=0.0, strict_lo=True)
        alphas = c.floats("schedule.alphas", _REQUIRED)
        if any(a <= 1 for a in alphas) or any(b >= a for a, b in zip(alphas, alphas[1:])):
            raise ConfigInvalid("schedule.alphas", "must be strictly decreasing and > 1")
        p["alphas"] = alphas
        p["epsilon"] = c.float("schedule.epsilon", "1.0", lo=0.0, hi=1.0)
        p["resolution_floor"] = c.float("schedule.resolution_floor", "3", lo=3.0)
        p["solver"] = _solver_options(c)
        p["t2"], p["t1"] = _band(c)
        p["R"] = c.float("analysis.R", "8", lo=0.0, strict_lo=True)
        p["polar_n_r"] = c.int("analysis.polar_n_r", "256", lo=16)
        p["polar_n_theta"] = c.int("analysis.polar_n_theta", "128", lo=16)
        p["profile_t"] = c.floats("analysis.profile_t", "0.3,0.4,0.5,0.6,0.7")
        p["bubble_energy"] = c.float("analysis.bubble_energy", str(8 * math.pi), lo=0.0,
                                     strict_lo=True)
        p["grad_threshold"] = c.float("analysis.grad_threshold", None, lo=0.0, strict_lo=True)
        if man.kind != "sphere" or man.ambient_dim != 3:
            raise ConfigInvalid("manifold.kind", "torus continuation needs the 2-sphere")
    elif kind == "SyntheticIdentitySuite":
        fam = SyntheticFamilyParams(
            alpha=c.float("family.alpha", "1.05", lo=1.0, strict_lo=True),
            lam=c.float("family.lam", "1e-3", lo=0.0, hi=1.0, strict_lo=True),
            t2=c.float("family.t2", "0.02"),
            t1=c.float("family.t1", "0.98"),
            y=tuple(c.floats("family.y", "1,0,0", n=3)),
            a_vec=tuple(c.floats("family.a_vec", "0,1,0", n=3)),
            degree=c.int("family.degree", "1", lo=1),
            blend_width=c.float("family.blend_width", "0.1", lo=0.0, strict_lo=True),
            calibrated=c.bool("family.calibrated", "true"),
        )
        if not 0 < fam.t2 < 1:
            raise ConfigInvalid("family.t2", "must lie in (0, 1)")
        if not fam.t2 < fam.t1 < 1:
            raise ConfigInvalid("family.t1", "must lie in (t2, 1)")
        if fam.degree > 3:
            raise ConfigInvalid("family.degree", "must be 1, 2 or 3")
        if fam.lam >= 1:
            raise ConfigInvalid("family.lam", "must be < 1")
        p["family"] = fam
        alphas = c.floats("family.alphas", "1.06,1.05,1.04,1.03,1.02")
        if any(a <= 1 for a in alphas) or any(b >= a for a, b in zip(alphas, alphas[1:])):
            raise ConfigInvalid("family.alphas", "must be strictly decreasing and > 1")
        p["alphas"] = alphas
        p["epsilon"] = c.float("energy.epsilon", "1.0", lo=0.0, hi=1.0)
        p["n_r"] = c.int("grid.n_r", "384", lo=16)
        p["n_theta"] = c.int("grid.n_theta", "64", lo=16)
        p["r_min"] = c.float("grid.r_min", "1e-5", lo=0.0, strict_lo=True)
        p["r_max"] = c.float("grid.r_max", "1.0", lo=0.0, strict_lo=True)
        if p["r_max"] <= p["r_min"]:
            raise ConfigInvalid("grid.r_max", "must exceed grid.r_min")
        p["t2"], p["t1"] = _band(c)
        p["t_probe"] = c.float("analysis.t_probe", "0.5", lo=0.0, hi=1.0)
        p["R"] = c.float("analysis.R", "1.25", lo=1.0, strict_lo=True)
        p["profile_t"] = c.floats("analysis.profile_t", "0.3,0.35,0.4,0.45,0.5,0.55,0.6,0.65,0.7")
        if man.kind != "sphere" or man.ambient_dim != 3:
            raise ConfigInvalid("manifold.kind", "synthetic families live on the 2-sphere")
    else:
        p["n_r"] = c.int("grid.n_r", "128", lo=16)
        p["n_theta"] = c.int("grid.n_theta", "256", lo=16)
        p["bubble_R"] = c.float("oracle.bubble_R", "4", lo=0.0, strict_lo=True)
        p["annulus_inner"] = c.float("oracle.annulus_inner", "0.25", lo=0.0, strict_lo=True)
        p["annulus_outer"] = c.float("oracle.annulus_outer", "1.0", lo=0.0, strict_lo=True)
        if p["annulus_outer"] <= p["annulus_inner"]:
            raise ConfigInvalid("oracle.annulus_outer", "must exceed oracle.annulus_inner")
        p["equator_n_r"] = c.int("oracle.equator_n_r", "64", lo=16)
        p["equator_n_theta"] = c.int("oracle.equator_n_theta", "128", lo=16)
        p["quad_tol"] = c.float("oracle.quad_tol", "1e-8", lo=0.0, strict_lo=True)
    out = out_override if out_override is not None else c.str("output.dir", _REQUIRED)
    out_dir = Path(out)
    try:
        out_dir.mkdir(parents=True, exist_ok=True)
    except OSError as exc:
        raise ConfigInvalid("output.dir", f"cannot create: {exc}") from None
    if not os.access(out_dir, os.W_OK):
        raise ConfigInvalid("output.dir", "not writable")
    return ExperimentConfig(kind, seed, out_dir, p, man)


# -- output helpers -----------------------------------------------------------------

def _write_rows(path, header, rows):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for r in rows:
            w.writerow([x if isinstance(x, str) else fmt(x) for x in r])


class _Metrics:
    def __init__(self):
        self.rows = []

    def add(self, name, value, note=""):
        self.rows.append((name, value, note))

    def write(self, path):
        _write_rows(path, ["name", "value", "note"],
                    [(n, fmt(v) if v is not None else "", note) for n, v, note in self.rows])


def _read_csv(path):
    with open(path, newline="") as fh:
        return list(csv.DictReader(fh))


def _num(s):
    if s is None or s == "":
        return None
    v = float(s)
    return None if math.isnan(v) else v


def render_summary(run_dir) -> dict:
    """summary.json from metrics.csv and identity.csv of a run directory."""
    run_dir = Path(run_dir)
    summary: dict = {}
    mpath = run_dir / "metrics.csv"
    if not mpath.exists():
        raise FileNotFoundError(f"{mpath} not found")
    for row in _read_csv(mpath):
        name, val = row["name"], row["value"]
        if val in ("true", "false"):
            summary[name] = val == "true"
            continue
        try:
            summary[name] = _num(val)
        except ValueError:
            summary[name] = val
        if row.get("note"):
            summary[name + "_note"] = row["note"]
    ipath = run_dir / "identity.csv"
    if ipath.exists():
        rows = _read_csv(ipath)
        for col in ("alpha", "mu_hat", "nu_hat", "defect", "rel_defect"):
            summary[col + "_sequence"] = [_num(r[col]) for r in rows]
    (run_dir / "summary.json").write_text(json.dumps(summary, indent=2, sort_keys=True) + "\n")
    return summary


# -- pipelines ---------------------------------------------------------------------

def _synthetic_record(u, fam, alpha, eps) -> BlowupRecord:
    e = alpha_energy(u, alpha, eps)
    lam = fam.lam
    mu, nu = estimate_mu_nu(lam, alpha)
    return BlowupRecord(alpha, eps, (0.0, 0.0), lam, mu, nu, (1.0 / lam) ** (alpha - 1),
                        e.total_alpha_energy, e.dirichlet_energy, None, None,
                        fam.bubble_energy, e.weight_sup, 1.0 / lam, float(u.grid.ds))


def run_synthetic(cfg: ExperimentConfig, log) -> int:
    p = cfg.params
    out = cfg.out_dir
    eps = p["epsilon"]
    grid = build_polar_grid((0.0, 0.0), p["r_min"], p["r_max"], p["n_r"], p["n_theta"])
    metrics = _Metrics()
    records = []
    headline = None
    alphas = list(p["alphas"])
    fam0 = p["family"]
    if fam0.alpha not in alphas:
        alphas = sorted(set(alphas) | {fam0.alpha}, reverse=True)
    for a in alphas:
        params = SyntheticFamilyParams(**{**fam0.__dict__, "alpha": a})
        u, fam = synthetic_neck_family(params, grid)
        rec = _synthetic_record(u, fam, a, eps)
        records.append(rec)
        log({"type": "record", **rec.to_dict()})
        if a == fam0.alpha:
            headline = (u, fam, rec)
    rep = energy_identity_report(records, headline[1].bubble_energy, 0.0, grid.measure)
    write_identity_table(rep, out / "identity.csv")

    u, fam, rec = headline
    a = fam0.alpha
    t2, t1 = p["t2"], p["t1"]
    fit = log_profile_fit(u, p["t_probe"], fam.lam, p["R"], a, fam.mu_hat, fam.bubble_energy)
    curve = circle_average(u)
    gres = geodesic_residual(curve, u.manifold, band=(fam.lam ** t1, fam.lam ** t2))
    _fill_residual(curve, u.manifold)
    length = neck_length_report(curve, fam.nu_hat, fam.bubble_energy, fam.lam, t2, t1, fam.mu_hat)
    ts = np.asarray(p["profile_t"])
    prof = radial_energy_profile(u, a, eps, ts, fam.lam, t0=float(ts.max()))
    lam_hat = fam.mu_hat * fam.bubble_energy
    pred = fam.mu_hat ** (1 - ts) * lam_hat
    with np.errstate(invalid="ignore", divide="ignore"):
        ratio_theta = np.where(prof.E_r > 0, prof.E_theta / prof.E_r, np.nan)
    _write_rows(out / "profile.csv",
                ["alpha", "t", "radius", "F", "E_r", "E_theta", "H", "F_predicted", "F_rel_dev"],
                [(a, ts[k], prof.radius[k], prof.F[k], prof.E_r[k], prof.E_theta[k], prof.H[k],
                  pred[k], (prof.F[k] - pred[k]) / lam_hat) for k in range(ts.size)])
    _write_neck(out / "neck.csv", [(a, curve)])

    metrics.add("alpha", a)
    metrics.add("lambda_alpha", fam.lam, "construction scale of the family")
    metrics.add("mu_hat", fam.mu_hat)
    metrics.add("nu_hat", fam.nu_hat)
    metrics.add("bubble_energy", fam.bubble_energy)
    metrics.add("norm_ratio", fit.norm_ratio, f"t_ring={fit.t_ring:.6f}")
    metrics.add("fit_a_norm", fit.a_norm)
    metrics.add("fit_rms", fit.fit_rms)
    metrics.add("length_measured", length.measured_length)
    metrics.add("length_predicted", length.predicted)
    metrics.add("length_ratio", length.ratio)
    metrics.add("length_predicted_mu", length.predicted_mu)
    metrics.add("length_ratio_mu", length.ratio_mu)
    metrics.add("geodesic_residual_sup", gres.sup)
    metrics.add("geodesic_residual_rms", gres.rms)
    metrics.add("F_max_rel_dev", float(np.max(np.abs(prof.F - pred)) / lam_hat))
    metrics.add("E_theta_over_E_r_band", float(ratio_theta[np.argmin(ts)]))
    head = next(r for r in rep.rows if r.alpha == a)
    metrics.add("defect", head.defect)
    metrics.add("rel_defect", head.rel_defect)
    tail = [abs(r.defect) for r in rep.rows[-3:]]
    metrics.add("defect_trend_monotone", all(x >= y for x, y in zip(tail, tail[1:])))
    metrics.add("defect_trend_slope", rep.trend_slope)
    metrics.add("log_nu_extrapolated", rep.log_nu_extrapolated, "linear in sqrt(alpha-1)")
    metrics.add("partial", False)
    metrics.write(out / "metrics.csv")
    return 0


def _fill_residual(curve, N):
    """Per-ring residual column for neck.csv; left empty on a stationary curve."""
    try:
        geodesic_residual(curve, N)
    except DegenerateSpeed:
        pass


def _write_neck(path, curves):
    rows = []
    for a, c in curves:
        res = c.geodesic_residual
        for i in range(len(c.radii)):
            rows.append((a, c.radii[i], c.arc_length[i], *c.omega[i], c.speeds[i],
                         np.nan if res is None else res[i]))
    K = curves[0][1].omega.shape[1] if curves else 3
    _write_rows(path, ["alpha", "r", "s"] + [f"omega_{k}" for k in range(K)] + ["speed", "residual"],
                rows)


def run_torus(cfg: ExperimentConfig, log) -> int:
    p = cfg.params
    out = cfg.out_dir
    grid = build_torus_grid(p["n"], p["side"])
    u0 = initial_degree_one_map(grid, cfg.manifold)
    sched = ContinuationSchedule(p["alphas"], p["epsilon"], p["solver"], p["resolution_floor"],
                                 p["grad_threshold"], p["R"])
    res = continuation_run(u0, sched, log)
    metrics = _Metrics()
    E_b = p["bubble_energy"]
    rep = energy_identity_report(res.records, E_b, 0.0, grid.side ** 2,
                                 cfg.manifold.known_min_bubble_energy)
    write_identity_table(rep, out / "identity.csv")
    t2, t1 = p["t2"], p["t1"]
    ts = np.asarray(p["profile_t"])
    prof_rows, curves = [], []
    for k, (rec, u) in enumerate(zip(res.records, res.fields)):
        tag = f"stage{k}"
        metrics.add(f"{tag}.alpha", rec.alpha)
        metrics.add(f"{tag}.lambda_alpha", rec.lambda_alpha if rec.has_bubble else None)
        metrics.add(f"{tag}.degree", rec.degree)
        metrics.add(f"{tag}.degree_raw", rec.degree_raw)
        metrics.add(f"{tag}.grad_pow_sq_rel_mu", None if rec.mu_hat is None
                    else rec.grad_pow ** 2 / rec.mu_hat - 1.0)
        metrics.add(f"{tag}.weight_sup", rec.weight_sup)
        metrics.add(f"{tag}.bubble_energy_hat", rec.bubble_energy_hat)
        metrics.add(f"{tag}.converged", res.reports[k].converged, res.reports[k].message)
        metrics.add(f"{tag}.warm_start_energy", res.warm_start_energy[k])
        metrics.add(f"{tag}.fresh_start_energy", res.fresh_start_energy[k])
        if not rec.has_bubble:
            metrics.add(f"{tag}.geodesic_residual", None, "no blow-up")
            continue
        lam = rec.lambda_alpha
        r_out = min(0.45 * grid.side, max(lam ** (t2 * 0.9), 4 * lam))
        pg = build_polar_grid(rec.x_alpha, 0.02 * lam, r_out, p["polar_n_r"], p["polar_n_theta"])
        pu = resample_to_polar(u, pg, order=3)
        try:
            prof = radial_energy_profile(pu, rec.alpha, rec.epsilon, ts, lam, t0=float(ts.max()))
            for j in range(ts.size):
                prof_rows.append((rec.alpha, ts[j], prof.radius[j], prof.F[j], prof.E_r[j],
                                  prof.E_theta[j], prof.H[j]))
        except AlphaNeckError as exc:
            metrics.add(f"{tag}.profile", None, f"{type(exc).__name__}: {exc}")
        curve = circle_average(pu)
        _fill_residual(curve, cfg.manifold)
        curves.append((rec.alpha, curve))
        band = (lam ** t1, lam ** t2)
        try:
            g = geodesic_residual(curve, cfg.manifold, band=band)
            metrics.add(f"{tag}.geodesic_residual", g.rms)
        except DegenerateSpeed as exc:
            metrics.add(f"{tag}.geodesic_residual", None, f"DegenerateSpeed: {exc}")
        try:
            L = neck_length_report(curve, rec.nu_hat, E_b, lam, t2, t1, rec.mu_hat)
            metrics.add(f"{tag}.length_measured", L.measured_length)
            metrics.add(f"{tag}.length_ratio", L.ratio)
        except (NoNeck, AlphaNeckError) as exc:
            metrics.add(f"{tag}.length_ratio", None, f"{type(exc).__name__}: {exc}")
        sites = detect_sites(u, 2, p["grad_threshold"])
        if len(sites) == 2:
            lab = check_bubble_separation([tuple(s) for s in sites])[(0, 1)]
            metrics.add(f"{tag}.second_site", sites[1].lambda_alpha, lab)
    _write_rows(out / "profile.csv", ["alpha", "t", "radius", "F", "E_r", "E_theta", "H"], prof_rows)
    _write_neck(out / "neck.csv", curves)
    metrics.add("halt_reason", res.halt_reason)
    metrics.add("n_records", len(res.records))
    lams = [r.lambda_alpha for r in res.records]
    metrics.add("lambda_strictly_decreasing", all(b < a for a, b in zip(lams, lams[1:])))
    tail = [abs(r.defect) for r in rep.rows[-3:]]
    metrics.add("defect_trend_monotone", all(x >= y for x, y in zip(tail, tail[1:])))
    metrics.add("defect_trend_slope", rep.trend_slope)
    metrics.add("log_nu_extrapolated", rep.log_nu_extrapolated, "linear in sqrt(alpha-1)")
    if rep.theta_band is not None:
        metrics.add("mu_band_upper", rep.theta_band[1], "observed max E_alpha as the uniform bound")
    metrics.add("partial", res.error is not None, res.error or "")
    metrics.write(out / "metrics.csv")
    return 1 if res.error else 0


def run_oracle(cfg: ExperimentConfig, log) -> int:
    p = cfg.params
    out = cfg.out_dir
    rows = []
    b = bubble_map(1.0)
    E_inf, E_R, E_2R = extrapolated_bubble_energy(b, p["bubble_R"], p["n_r"], p["n_theta"])
    rows.append(("bubble_energy_grid", E_inf, 8 * math.pi))
    q = quadrature_oracle(lambda x, y: b.density(np.stack([x, y], -1)), ("plane",), p["quad_tol"])
    rows.append(("bubble_energy_quadrature", q, 8 * math.pi))
    a_in, a_out = p["annulus_inner"], p["annulus_outer"]
    g = build_polar_grid((0.0, 0.0), a_in, a_out, p["equator_n_r"], p["equator_n_theta"])
    eq = equator_map(a_in, a_out)
    e = alpha_energy(fill(g, eq), 1.0, 0.0)
    rows.append(("equator_energy_grid", e.dirichlet_energy, eq.total_energy))
    q = quadrature_oracle(lambda x, y: 1.0 / (x * x + y * y), ("annulus", a_in, a_out), 1e-10)
    rows.append(("equator_energy_quadrature", q, eq.total_energy))
    rows.append(("bubble_energy_B3", b.energy_in_ball(3.0), 8 * math.pi * 9 / 10))
    _write_rows(out / "oracle.csv", ["quantity", "computed", "reference", "rel_error"],
                [(n, v, r, (v - r) / r) for n, v, r in rows])
    metrics = _Metrics()
    for n, v, r in rows:
        metrics.add(n, v)
        metrics.add(n + "_rel_error", (v - r) / r)
        log({"type": "oracle", "quantity": n, "computed": v, "reference": r})
    metrics.add("partial", False)
    metrics.write(out / "metrics.csv")
    return 0


def run_experiment(config_path, out_dir=None) -> int:
    cfg = load_config(config_path, out_dir)
    log = JsonlLog(cfg.out_dir / "run.jsonl")
    log({"type": "config", "kind": cfg.kind, "seed": cfg.seed, "version": __version__,
         "config": str(config_path)})
    np.random.seed(cfg.seed)
    runner = {"TorusContinuation": run_torus, "SyntheticIdentitySuite": run_synthetic,
              "OracleValidation": run_oracle}[cfg.kind]
    try:
        status = runner(cfg, log)
    except AlphaNeckError as exc:
        m = _Metrics()
        m.add("partial", True, f"{type(exc).__name__}: {exc}")
        m.write(cfg.out_dir / "metrics.csv")
        status = 1
    render_summary(cfg.out_dir)
    return status


def main(argv=None) -> int:
    ap = argparse.ArgumentParser(prog="alphaneck", description=__doc__.splitlines()[0])
    sub = ap.add_subparsers(dest="cmd", required=True)
    r = sub.add_parser("run", help="run an experiment config")
    r.add_argument("config")
    r.add_argument("--out", default=None, help="override output.dir")
    v = sub.add_parser("validate", help="parse and validate a config")
    v.add_argument("config")
    rp = sub.add_parser("report", help="re-render summary.json from a run directory")
    rp.add_argument("run_dir")
    args = ap.parse_args(argv)
    try:
        if args.cmd == "run":
            status = run_experiment(args.config, args.out)
            print(json.dumps(json.loads((Path(load_config(args.config, args.out).out_dir)
                                         / "summary.json").read_text()), indent=2))
            return status
        if args.cmd == "validate":
            cfg = load_config(args.config)
            print(f"ok: {cfg.kind}")
            return 0
        summary = render_summary(args.run_dir)
        print(json.dumps(summary, indent=2))
        return 0
    except ConfigInvalid as exc:
        print(f"ConfigInvalid: {exc}", file=sys.stderr)
        return 2
    except FileNotFoundError as exc:
        print(str(exc), file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
