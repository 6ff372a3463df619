"""Neck analysis on polar grids: circle averages, log-profile fits, geodesic
residuals, length measurements and dyadic oscillation profiles."""
from __future__ import annotations

import csv
from dataclasses import dataclass, field

import numpy as np
from scipy.interpolate import CubicSpline
from scipy.spatial import ConvexHull
from scipy.spatial.distance import pdist

from .domain import MapField, PolarGrid, coordinate_derivatives
from .energy import _edge_parts
from .errors import BandOutOfRange, DegenerateSpeed, NoNeck
from .manifold import EmbeddedManifold

__all__ = [
    "NeckCurve",
    "NeckProfileFit",
    "GeodesicResidual",
    "NeckLengthReport",
    "OscillationProfile",
    "circle_average",
    "log_profile_fit",
    "geodesic_residual",
    "neck_length_report",
    "oscillation_profile",
    "ring_diameters",
    "point_set_diameter",
    "unit_speed_resample",
    "write_neck_csv",
    "SPEED_FLOOR",
]

SPEED_FLOOR = 1e-10


def point_set_diameter(X) -> float:
    """Largest pairwise distance in a point cloud (hull vertices only when it helps)."""
    X = np.asarray(X, dtype=float).reshape(-1, np.shape(X)[-1])
    if len(X) < 2:
        return 0.0
    if len(X) > 400:
        try:
            X = X[ConvexHull(X, qhull_options="QJ").vertices]
        except Exception:
            X = np.unique(np.round(X, 14), axis=0)
        if len(X) < 2:
            return 0.0
    return float(np.max(pdist(X)))


def ring_diameters(u: MapField) -> np.ndarray:
    return np.array([point_set_diameter(u.values[i]) for i in range(u.grid.shape[0])])


@dataclass
class NeckCurve:
    radii: np.ndarray
    omega: np.ndarray
    speeds: np.ndarray
    arc_length: np.ndarray
    max_ring_oscillation: np.ndarray
    projected: bool = False
    geodesic_residual: np.ndarray | None = None

    def band(self, r_lo, r_hi):
        return (self.radii >= r_lo * (1 - 1e-12)) & (self.radii <= r_hi * (1 + 1e-12))

    def off_manifold(self, N: EmbeddedManifold) -> np.ndarray:
        return N.distance(self.omega)


def circle_average(u: MapField) -> NeckCurve:
    """omega(r_i) = angular mean of u on ring i (the periodic trapezoid rule)."""
    grid = u.grid
    if not isinstance(grid, PolarGrid):
        raise TypeError("circle averages need a polar grid")
    omega = np.mean(u.values, axis=1)
    d_s, _ = coordinate_derivatives(grid, omega[:, None, :])
    speeds = np.linalg.norm(d_s[:, 0, :], axis=-1) / grid.radii
    chords = np.linalg.norm(np.diff(omega, axis=0), axis=-1)
    arc = np.concatenate([[0.0], np.cumsum(chords)])
    return NeckCurve(grid.radii.copy(), omega, speeds, arc, ring_diameters(u))


@dataclass
class NeckProfileFit:
    t_alpha: float
    t_ring: float
    a_vec: np.ndarray
    a_norm: float
    normal_part: float
    fit_rms: float
    predicted_norm: float | None
    norm_ratio: float | None
    base_point: np.ndarray
    n_rings: int


def log_profile_fit(u: MapField, t_alpha: float, lambda_alpha: float, R: float, alpha: float,
                    mu_hat: float | None = None, bubble_energy: float | None = None,
                    no_neck_tol: float = 1e-12) -> NeckProfileFit:
    """Least-squares fit of (u(r, theta) - u(r_t, 0)) / sqrt(alpha-1) ~ c + a log(r / r_t).

    All nodes of the rings with r in [r_t/R, r_t R], r_t = lambda^t, are pooled.
    The fitted a is tangent-projected at the base point u(r_t, 0).  When
    mu_hat and bubble_energy are given, the fit is compared with the norm
    mu_hat^(1-t) sqrt(E/pi), with t the exponent of the ring actually used.
    """
    grid = u.grid
    if not isinstance(grid, PolarGrid):
        raise TypeError("log_profile_fit needs a polar grid")
    if not alpha > 1:
        raise ValueError("alpha must exceed 1")
    if not R > 1:
        raise ValueError("the fit band factor R must exceed 1")
    r_t = lambda_alpha ** t_alpha
    lo, hi = r_t / R, r_t * R
    if lo < grid.r_min * (1 - 1e-12) or hi > grid.r_max * (1 + 1e-12):
        raise BandOutOfRange(f"fit band [{lo:.4g}, {hi:.4g}] leaves the grid "
                             f"[{grid.r_min:.4g}, {grid.r_max:.4g}]")
    i_t = grid.ring_index(r_t)
    rings = np.nonzero((grid.radii >= lo) & (grid.radii <= hi))[0]
    if rings.size < 3:
        raise BandOutOfRange("fit band covers fewer than three rings")
    base = u.values[i_t, 0]
    x = np.repeat(np.log(grid.radii[rings] / grid.radii[i_t]), grid.n_theta)
    Y = (u.values[rings].reshape(-1, u.K) - base) / np.sqrt(alpha - 1)
    M = np.stack([np.ones_like(x), x], axis=1)
    coef, *_ = np.linalg.lstsq(M, Y, rcond=None)
    resid = Y - M @ coef
    a_raw = coef[1]
    a_vec = u.manifold.tangent_project(base, a_raw)
    a_norm = float(np.linalg.norm(a_vec))
    t_ring = float(np.log(grid.radii[i_t]) / np.log(lambda_alpha))
    pred = ratio = None
    if mu_hat is not None and bubble_energy is not None:
        if a_norm <= no_neck_tol:
            raise NoNeck("fitted log-profile vector vanishes")
        pred = float(mu_hat ** (1 - t_ring) * np.sqrt(bubble_energy / np.pi))
        ratio = a_norm / pred
    return NeckProfileFit(float(t_alpha), t_ring, a_vec, a_norm,
                          float(np.linalg.norm(a_raw - a_vec)),
                          float(np.sqrt(np.mean(np.sum(resid ** 2, axis=1)))),
                          pred, ratio, base.copy(), int(rings.size))


# -- geodesic residual --------------------------------------------------------

@dataclass
class GeodesicResidual:
    per_point: np.ndarray
    sup: float
    l2: float
    rms: float
    s: np.ndarray = field(repr=False)
    points: np.ndarray = field(repr=False)
    kept: np.ndarray = field(repr=False)


def _circumcircle(p):
    """Curvature vector and unit tangent of the circle through each consecutive triple.

    Works in any ambient dimension: w = a u + b v solves <w, u> = |u|^2/2,
    <w, v> = |v|^2/2 with u, v the offsets of the neighbours, and the curvature
    vector is w / |w|^2.  Exact on circles whatever the spacing; collinear
    triples get zero curvature.
    """
    B = p[1:-1]
    u, v = p[:-2] - B, p[2:] - B
    uu, vv, uv = (np.sum(u * u, -1), np.sum(v * v, -1), np.sum(u * v, -1))
    det = uu * vv - uv * uv
    flat = det <= 1e-14 * uu * vv
    det = np.where(flat, 1.0, det)
    a = 0.5 * (uu * vv - vv * uv) / det
    b = 0.5 * (vv * uu - uu * uv) / det
    w = a[:, None] * u + b[:, None] * v
    w2 = np.sum(w * w, -1)
    kappa = np.where(flat[:, None], 0.0, w / np.where(flat, 1.0, w2)[:, None])
    chord = p[2:] - p[:-2]
    nh = np.where(flat[:, None], 0.0, w / np.sqrt(np.where(flat, 1.0, w2))[:, None])
    T = chord - np.sum(chord * nh, -1)[:, None] * nh
    return kappa, T


def geodesic_residual(curve, N: EmbeddedManifold, band=None,
                      speed_floor: float = SPEED_FLOOR) -> GeodesicResidual:
    """|curvature vector of omega - A(omega)(T, T)| along the projected curve.

    ``curve`` is a NeckCurve or an (n, K) array of points.  Points are projected
    onto N and samples closer than ``speed_floor`` to the previous kept sample
    are dropped.  At each interior sample the curvature vector and tangent come
    from the circle through it and its two neighbours; T is tangent-projected
    and normalized.  The residual vanishes for geodesics, and the ambient
    great circles of a round sphere give it to roundoff.
    """
    if isinstance(curve, NeckCurve):
        pts = curve.omega
        if band is not None:
            pts = pts[curve.band(*band)]
    else:
        pts = np.asarray(curve, dtype=float)
    if len(pts) < 3:
        raise DegenerateSpeed("need at least three samples")
    P = N.project(pts)
    keep = [0]
    for i in range(1, len(P)):
        if np.linalg.norm(P[i] - P[keep[-1]]) >= speed_floor:
            keep.append(i)
    keep = np.array(keep)
    if keep.size < 3:
        raise DegenerateSpeed("curve is stationary: fewer than three distinct samples")
    P = P[keep]
    s = np.concatenate([[0.0], np.cumsum(np.linalg.norm(np.diff(P, axis=0), axis=-1))])
    kappa, T = _circumcircle(P)
    q = P[1:-1]
    T = N.tangent_project(q, T)
    speed = np.linalg.norm(T, axis=-1)
    if np.any(speed < speed_floor):
        raise DegenerateSpeed("tangent vanishes at an interior sample")
    T = T / speed[:, None]
    res = np.linalg.norm(kappa - N.second_fundamental_form(q, T, T), axis=-1)
    ds = 0.5 * (s[2:] - s[:-2])
    l2 = float(np.sqrt(np.sum(res ** 2 * ds)))
    rms = float(np.sqrt(np.sum(res ** 2 * ds) / np.sum(ds)))
    if isinstance(curve, NeckCurve) and band is None:
        full = np.full(len(curve.radii), np.nan)
        full[keep[1:-1]] = res
        curve.geodesic_residual = full
        curve.projected = True
    return GeodesicResidual(res, float(np.max(res)), l2, rms, s, P, keep)


def unit_speed_resample(points, n: int, n_fine: int = 64):
    """Resample a curve at n points equally spaced in arc length.

    A cubic spline through the points (chord parameter) is integrated with
    Gauss–Legendre per segment; arc length is inverted by Newton steps.
    Returns (sigma, resampled points, arc-length increments measured on the spline).
    """
    P = np.asarray(points, dtype=float)
    tau = np.concatenate([[0.0], np.cumsum(np.linalg.norm(np.diff(P, axis=0), axis=-1))])
    if tau[-1] <= 0:
        raise DegenerateSpeed("curve has zero length")
    cs = CubicSpline(tau, P, axis=0)
    dcs = cs.derivative()
    xg, wg = np.polynomial.legendre.leggauss(8)

    def seg_len(a, b):
        a = np.atleast_1d(a)
        b = np.atleast_1d(b)
        mid, half = 0.5 * (a + b), 0.5 * (b - a)
        x = mid[:, None] + half[:, None] * xg[None, :]
        sp = np.linalg.norm(dcs(x), axis=-1)
        return half * np.sum(wg * sp, axis=1)

    knots = np.linspace(0, tau[-1], (len(tau) - 1) * n_fine + 1)
    cum = np.concatenate([[0.0], np.cumsum(seg_len(knots[:-1], knots[1:]))])
    total = cum[-1]
    sigma = np.linspace(0, total, n)
    t = np.interp(sigma, cum, knots)
    for _ in range(8):
        j = np.clip(np.searchsorted(knots, t) - 1, 0, len(knots) - 2)
        arc = cum[j] + seg_len(knots[j], t)
        sp = np.linalg.norm(dcs(t), axis=-1)
        t = np.clip(t - (arc - sigma) / sp, 0, tau[-1])
    steps = seg_len(t[:-1], t[1:])
    return sigma, cs(t), steps


# -- length -------------------------------------------------------------------

@dataclass
class NeckLengthReport:
    t2: float
    t1: float
    r_inner: float
    r_outer: float
    measured_length: float
    predicted: float
    ratio: float
    predicted_mu: float | None = None
    ratio_mu: float | None = None
    n_rings: int = 0


def neck_length_report(curve: NeckCurve, nu_hat: float, bubble_energy: float,
                       lambda_alpha: float, t2: float, t1: float,
                       mu_hat: float | None = None, tol: float = 1e-9) -> NeckLengthReport:
    """Polygonal length of omega over lambda^t1 <= r <= lambda^t2 against
    (t1 - t2) sqrt(E/pi) log nu.

    With mu_hat, the length implied by a neck speed following mu^(1-t) sqrt(E/pi)
    is also reported: sqrt(E/pi) log nu int_{t2}^{t1} mu^(1-t) dt.
    """
    if not nu_hat > 1 + tol:
        raise NoNeck(f"nu_hat = {nu_hat} gives no neck")
    if not 0 < t2 < t1 < 1:
        raise ValueError("band exponents need 0 < t2 < t1 < 1")
    r = curve.radii
    r_in, r_out = lambda_alpha ** t1, lambda_alpha ** t2
    ds = np.log(r[1] / r[0])
    if r_in < r[0] * np.exp(-0.5 * ds) or r_out > r[-1] * np.exp(0.5 * ds):
        raise BandOutOfRange(f"length band [{r_in:.4g}, {r_out:.4g}] leaves the rings")
    # band edges snap to the nearest rings; the prediction uses their exponents
    i0 = int(np.argmin(np.abs(np.log(r / r_in))))
    i1 = int(np.argmin(np.abs(np.log(r / r_out))))
    if i1 - i0 < 1:
        raise BandOutOfRange("length band covers fewer than two rings")
    e1 = float(np.log(r[i0]) / np.log(lambda_alpha))
    e2 = float(np.log(r[i1]) / np.log(lambda_alpha))
    pts = curve.omega[i0:i1 + 1]
    L = float(np.sum(np.linalg.norm(np.diff(pts, axis=0), axis=-1)))
    c = np.sqrt(bubble_energy / np.pi) * np.log(nu_hat)
    pred = (e1 - e2) * c
    rep = NeckLengthReport(t2, t1, float(r[i0]), float(r[i1]), L, float(pred), L / pred,
                           n_rings=i1 - i0 + 1)
    if mu_hat is not None:
        lm = np.log(mu_hat)
        integral = (e1 - e2) if abs(lm) < 1e-14 else (mu_hat ** (1 - e2) - mu_hat ** (1 - e1)) / lm
        rep.predicted_mu = float(c * integral)
        rep.ratio_mu = L / rep.predicted_mu
    return rep


# -- oscillation ----------------------------------------------------------------

@dataclass
class OscillationProfile:
    k: np.ndarray
    r_lo: np.ndarray
    r_hi: np.ndarray
    osc: np.ndarray
    energy: np.ndarray


def oscillation_profile(u: MapField, base_radius: float | None = None) -> OscillationProfile:
    """Diameter of u(Q_k) and Dirichlet energy on Q_k = {2^k b <= r < 2^(k+1) b}."""
    grid = u.grid
    if not isinstance(grid, PolarGrid):
        raise TypeError("oscillation profiles need a polar grid")
    b = grid.r_min if base_radius is None else float(base_radius)
    _, _, G0, G1 = _edge_parts(grid, u.values)
    dens = (G0 + G1) * grid.flat_weights / grid.J ** 2
    k_max = int(np.floor(np.log2(grid.r_max / b) + 1e-9))
    ks, lo, hi, osc, en = [], [], [], [], []
    r = grid.radii
    for k in range(k_max):
        a, c = b * 2.0 ** k, b * 2.0 ** (k + 1)
        m = (r >= a * (1 - 1e-12)) & (r < c * (1 - 1e-12))
        if not np.any(m):
            continue
        ks.append(k)
        lo.append(a)
        hi.append(c)
        osc.append(point_set_diameter(u.values[m]))
        en.append(float(np.sum(dens[m])))
    return OscillationProfile(np.array(ks), np.array(lo), np.array(hi), np.array(osc), np.array(en))


def write_neck_csv(curve: NeckCurve, path):
    K = curve.omega.shape[1]
    res = curve.geodesic_residual
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["r", "s"] + [f"omega_{k}" for k in range(K)] + ["speed", "residual"])
        for i in range(len(curve.radii)):
            row = [curve.radii[i], curve.arc_length[i], *curve.omega[i], curve.speeds[i],
                   np.nan if res is None else res[i]]
            w.writerow([f"{v:.17g}" for v in row])
