"""Concentration detection, bubble extraction and the per-alpha blow-up bookkeeping."""
from __future__ import annotations

import csv
from dataclasses import asdict, dataclass, field

import numpy as np
from scipy import ndimage
from scipy.optimize import least_squares
from scipy.spatial.transform import Rotation

from .domain import FREE, MapField, PolarGrid, TorusGrid, build_polar_grid, coordinate_derivatives
from .energy import _edge_parts, alpha_energy
from .errors import BelowResolution, DegreeAmbiguous, PatchOutOfBounds
from .manifold import UnitSphere
from .oracles import inv_stereo

__all__ = [
    "NoBlowup",
    "BlowupSite",
    "BubbleExtract",
    "BlowupRecord",
    "DegreeResult",
    "IdentityRow",
    "EnergyIdentityReport",
    "gradient_norm",
    "detect_blowup",
    "detect_sites",
    "rescale_bubble",
    "estimate_mu_nu",
    "map_degree",
    "check_bubble_separation",
    "energy_identity_report",
    "extrapolate_log_nu",
    "make_record",
    "write_identity_table",
]


@dataclass(frozen=True)
class NoBlowup:
    """Returned by detection when the gradient stays below the threshold."""

    max_grad: float
    lambda_alpha: float = float("inf")

    def __bool__(self):
        return False


@dataclass(frozen=True)
class BlowupSite:
    x_alpha: tuple
    lambda_alpha: float
    max_grad: float
    index: tuple

    def __iter__(self):
        return iter((self.x_alpha, self.lambda_alpha))


def gradient_norm(u: MapField) -> np.ndarray:
    """Per-node |grad u| (Frobenius) from the energy stencil, flat metric."""
    _, _, G0, G1 = _edge_parts(u.grid, u.values)
    return np.sqrt((G0 + G1) / u.grid.J ** 2)


def _default_threshold(grid):
    return 10.0 / (grid.side if isinstance(grid, TorusGrid) else grid.r_max)


def detect_blowup(u: MapField, alpha: float = 1.0, grad_threshold: float | None = None):
    """Node of maximal |grad u|; lambda_alpha = 1 / max |grad u|."""
    g = gradient_norm(u)
    thr = _default_threshold(u.grid) if grad_threshold is None else grad_threshold
    idx = np.unravel_index(int(np.argmax(g)), g.shape)
    m = float(g[idx])
    if m < thr:
        return NoBlowup(m)
    x = u.grid.positions()[idx]
    return BlowupSite((float(x[0]), float(x[1])), 1.0 / m, m, tuple(int(i) for i in idx))


def _torus_delta(grid: TorusGrid, P, x):
    d = P - np.asarray(x)
    return d - grid.side * np.round(d / grid.side)


def detect_sites(u: MapField, n_max: int = 4, grad_threshold: float | None = None,
                 exclusion: float = 10.0):
    """Greedy list of concentration sites; each later site lies outside
    exclusion * lambda of the earlier ones."""
    g = gradient_norm(u).copy()
    thr = _default_threshold(u.grid) if grad_threshold is None else grad_threshold
    P = u.grid.positions()
    sites = []
    for _ in range(n_max):
        idx = np.unravel_index(int(np.argmax(g)), g.shape)
        m = float(g[idx])
        if m < thr:
            break
        x = P[idx]
        sites.append(BlowupSite((float(x[0]), float(x[1])), 1.0 / m, m, tuple(int(i) for i in idx)))
        if isinstance(u.grid, TorusGrid):
            d = np.linalg.norm(_torus_delta(u.grid, P, x), axis=-1)
        else:
            d = np.linalg.norm(P - x, axis=-1)
        g[d < exclusion / m] = 0.0
    return sites


# -- bubble extraction ----------------------------------------------------------

@dataclass
class BubbleExtract:
    field: MapField = field(repr=False)
    R: float = 0.0
    energy_in_R: float = 0.0
    comparison_error: float | None = None
    not_a_bubble: bool = False
    fitted_scale: float | None = None
    fitted_center: tuple | None = None
    orientation: int = 1


def _interp_torus(u: MapField, pts, order=3):
    grid = u.grid
    c = [pts[..., 0].ravel() / grid.h, pts[..., 1].ravel() / grid.h]
    out = np.stack([ndimage.map_coordinates(u.values[..., k], c, order=order, mode="grid-wrap")
                    for k in range(u.K)], axis=-1)
    return out.reshape(pts.shape[:-1] + (u.K,))


def _interp_polar(u: MapField, pts, order=3):
    grid = u.grid
    pad = 4
    vals = np.concatenate([u.values[:, -pad:], u.values, u.values[:, :pad]], axis=1)
    d = pts - grid.center
    r = np.hypot(d[..., 0], d[..., 1])
    th = np.mod(np.arctan2(d[..., 1], d[..., 0]), 2 * np.pi)
    c = [((np.log(r) - grid.s[0]) / grid.ds).ravel(), (th / grid.dtheta + pad).ravel()]
    out = np.stack([ndimage.map_coordinates(vals[..., k], c, order=order, mode="nearest")
                    for k in range(u.K)], axis=-1)
    return out.reshape(pts.shape[:-1] + (u.K,))


def _bubble_values(params, xi, orientation):
    s, c0, c1 = params[:3]
    Q = Rotation.from_rotvec(params[3:6]).as_matrix()
    z = ((xi[:, 0] - c0) + 1j * orientation * (xi[:, 1] - c1)) / s
    return inv_stereo(z) @ Q.T


def _fit_bubble(xi, vals, s0):
    best = None
    for orient in (1, -1):
        # Kabsch rotation for the nominal bubble
        v0 = _bubble_values(np.array([s0, 0, 0, 0, 0, 0.0]), xi, orient)
        H = v0.T @ vals
        U, _, Vt = np.linalg.svd(H)
        D = np.diag([1, 1, np.sign(np.linalg.det(Vt.T @ U.T))])
        Q = Vt.T @ D @ U.T
        rv = Rotation.from_matrix(Q).as_rotvec()
        x0 = np.concatenate([[s0, 0.0, 0.0], rv])
        lb = [s0 / 2, -2, -2, -np.inf, -np.inf, -np.inf]
        ub = [2 * s0, 2, 2, np.inf, np.inf, np.inf]

        def res(p):
            return (_bubble_values(p, xi, orient) - vals).ravel()

        sol = least_squares(res, x0, bounds=(lb, ub), xtol=1e-14, ftol=1e-14, gtol=1e-14)
        err = float(np.sqrt(np.mean(np.sum(res(sol.x).reshape(-1, 3) ** 2, axis=1))))
        if best is None or err < best[0]:
            best = (err, sol.x, orient)
    return best


def rescale_bubble(u: MapField, x_alpha, lambda_alpha: float, R: float = 8.0,
                   n_r: int = 96, n_theta: int = 128, fit: bool = True) -> BubbleExtract:
    """v(xi) = u(x_alpha + lambda_alpha xi) on |xi| <= R.

    The rescaled map is resampled (cubic) on a polar patch for its energy.  For
    S^2 targets an exact bubble (scale, center, rotation, orientation) is fitted
    by least squares on the raw grid nodes inside the patch.
    """
    grid = u.grid
    if not np.isfinite(lambda_alpha) or lambda_alpha <= 0:
        raise BelowResolution("no finite concentration scale")
    rad = R * lambda_alpha
    x_alpha = np.asarray(x_alpha, dtype=float)
    if isinstance(grid, TorusGrid):
        h = grid.h
        if rad > grid.side / 2:
            raise PatchOutOfBounds(f"patch radius {rad:.4g} exceeds half the torus side")
    else:
        off = np.linalg.norm(x_alpha - grid.center)
        h = off * grid.ds if off > 0 else grid.r_min
        if off + rad > grid.r_max:
            raise PatchOutOfBounds("patch leaves the polar grid")
        if off > 0 and off - rad < grid.r_min:
            raise PatchOutOfBounds("patch meets the inner hole of the polar grid")
    if rad < 4 * h:
        raise BelowResolution(f"patch radius {rad:.3g} is below four cells ({4 * h:.3g})")

    patch = build_polar_grid((0.0, 0.0), R * 1e-3, R, n_r, n_theta)
    pts = x_alpha + lambda_alpha * patch.positions()
    if isinstance(grid, TorusGrid):
        vals = _interp_torus(u, np.mod(pts, grid.side))
    else:
        vals = _interp_polar(u, pts)
    vals = u.manifold.project(vals)
    v = MapField(patch, vals, u.manifold, FREE, u.constraint_tol)
    e = alpha_energy(v, 1.0, 0.0)
    energy = e.dirichlet_energy + float(np.mean(e.density[0])) * np.pi * patch.r_min ** 2
    out = BubbleExtract(v, float(R), float(energy))
    if fit and isinstance(u.manifold, UnitSphere) and u.K == 3:
        P = grid.positions().reshape(-1, 2)
        if isinstance(grid, TorusGrid):
            d = _torus_delta(grid, P, x_alpha)
        else:
            d = P - x_alpha
        inside = np.linalg.norm(d, axis=-1) <= rad
        xi = d[inside] / lambda_alpha
        raw = u.values.reshape(-1, u.K)[inside]
        if len(xi) >= 8:
            err, p, orient = _fit_bubble(xi, raw, 2 * np.sqrt(2))
            out.comparison_error = err
            out.not_a_bubble = err >= 0.5
            out.fitted_scale = float(p[0])
            out.fitted_center = (float(p[1]), float(p[2]))
            out.orientation = orient
    return out


# -- estimators and records ----------------------------------------------------

def estimate_mu_nu(lambda_alpha: float, alpha: float):
    """(lambda^(2-2 alpha), lambda^(-sqrt(alpha-1)))."""
    if not 0 < lambda_alpha <= 1:
        raise ValueError(f"lambda_alpha must lie in (0, 1], got {lambda_alpha}")
    if not alpha > 1:
        raise ValueError("alpha must exceed 1")
    ll = np.log(lambda_alpha)
    return float(np.exp((2 - 2 * alpha) * ll)), float(np.exp(-np.sqrt(alpha - 1) * ll))


@dataclass(frozen=True)
class DegreeResult:
    degree: int
    raw: float
    distance: float

    def __int__(self):
        return self.degree


def map_degree(u: MapField, ambiguity: float = 0.2) -> DegreeResult:
    """Nearest integer to (1/4 pi) sum u . (u_x x u_y) h^2 (centered differences)."""
    if not isinstance(u.grid, TorusGrid) or u.K != 3:
        raise ValueError("map_degree needs an S^2-valued field on a torus grid")
    ux, uy = coordinate_derivatives(u.grid, u.values)
    raw = float(np.sum(u.values * np.cross(ux, uy)) * u.grid.h ** 2 / (4 * np.pi))
    d = int(np.rint(raw))
    if abs(raw - d) > ambiguity:
        raise DegreeAmbiguous(raw)
    return DegreeResult(d, raw, abs(raw - d))


def check_bubble_separation(bubbles, R: float = 10.0, ratio_threshold: float = 10.0):
    """Label each pair of (x, lambda) sites as H1 (spatially separated), H2 (scale
    separated) or SameBubble."""
    out = {}
    for i in range(len(bubbles)):
        for j in range(i + 1, len(bubbles)):
            (xi, li), (xj, lj) = bubbles[i], bubbles[j]
            dist = float(np.linalg.norm(np.asarray(xi, dtype=float) - np.asarray(xj, dtype=float)))
            if dist > R * (li + lj):
                out[(i, j)] = "H1"
            elif max(li / lj, lj / li) > ratio_threshold:
                out[(i, j)] = "H2"
            else:
                out[(i, j)] = "SameBubble"
    return out


@dataclass
class BlowupRecord:
    alpha: float
    epsilon: float
    x_alpha: tuple | None
    lambda_alpha: float
    mu_hat: float | None
    nu_hat: float | None
    grad_pow: float
    total_E_alpha: float
    dirichlet_E: float
    degree: int | None
    degree_raw: float | None
    bubble_energy_hat: float | None
    weight_sup: float
    max_grad: float
    h: float

    @property
    def has_bubble(self) -> bool:
        return np.isfinite(self.lambda_alpha)

    def to_dict(self) -> dict:
        d = asdict(self)
        d["lambda_alpha"] = None if not self.has_bubble else self.lambda_alpha
        return d


def make_record(u: MapField, alpha: float, epsilon: float, grad_threshold=None,
                R: float | None = 8.0, with_degree: bool = True) -> BlowupRecord:
    """Analyse one solution: detection, estimators, energies, degree, bubble energy."""
    e = alpha_energy(u, alpha, epsilon)
    site = detect_blowup(u, alpha, grad_threshold)
    h = u.grid.h if isinstance(u.grid, TorusGrid) else float(u.grid.ds)
    deg = raw = None
    if with_degree and isinstance(u.grid, TorusGrid) and u.K == 3:
        try:
            dr = map_degree(u)
            deg, raw = dr.degree, dr.raw
        except DegreeAmbiguous as exc:
            raw = exc.raw
    if not site:
        return BlowupRecord(alpha, epsilon, None, float("inf"), None, None,
                            site.max_grad ** (alpha - 1), e.total_alpha_energy,
                            e.dirichlet_energy, deg, raw, None, e.weight_sup, site.max_grad, h)
    lam = site.lambda_alpha
    mu, nu = estimate_mu_nu(min(lam, 1.0), alpha) if alpha > 1 else (1.0, 1.0)
    be = None
    if R is not None:
        try:
            be = rescale_bubble(u, site.x_alpha, lam, R, fit=False).energy_in_R
        except (BelowResolution, PatchOutOfBounds):
            be = None
    return BlowupRecord(alpha, epsilon, site.x_alpha, lam, mu, nu, site.max_grad ** (alpha - 1),
                        e.total_alpha_energy, e.dirichlet_energy, deg, raw, be, e.weight_sup,
                        site.max_grad, h)


# -- energy identity -----------------------------------------------------------

@dataclass
class IdentityRow:
    alpha: float
    E_alpha: float
    mu_hat: float | None
    nu_hat: float | None
    defect: float
    rel_defect: float


@dataclass
class EnergyIdentityReport:
    rows: list
    trend_slope: float | None
    bubble_energy: float
    base_energy: float
    region_measure: float
    theta_band: tuple | None = None
    log_nu_extrapolated: float | None = None

    @property
    def defects(self):
        return np.array([r.defect for r in self.rows])


def extrapolate_log_nu(records):
    """Linear fit of log nu_hat against sqrt(alpha - 1); returns the value at alpha = 1."""
    pts = [(np.sqrt(r.alpha - 1), np.log(r.nu_hat)) for r in records
           if r.nu_hat is not None and r.alpha > 1]
    if len(pts) < 2:
        return None
    x, y = np.array(pts).T
    slope, icpt = np.polyfit(x, y, 1)
    return float(icpt)


def energy_identity_report(records, bubble_energy: float, base_energy: float,
                           region_measure: float, min_bubble_energy: float | None = None):
    """defect = E_alpha - base - measure - mu_hat^2 E(v) per record (mu term absent
    without a bubble), with the slope of |defect| against alpha."""
    rows = []
    for r in records:
        d = r.total_E_alpha - base_energy - region_measure
        if r.has_bubble and r.mu_hat is not None:
            d -= r.mu_hat ** 2 * bubble_energy
        rows.append(IdentityRow(r.alpha, r.total_E_alpha, r.mu_hat, r.nu_hat, d,
                                d / r.total_E_alpha if r.total_E_alpha else 0.0))
    slope = None
    if len(rows) >= 2:
        a = np.array([x.alpha for x in rows])
        slope = float(np.polyfit(a, np.abs([x.defect for x in rows]), 1)[0])
    band = None
    if min_bubble_energy and records:
        theta = max(r.total_E_alpha for r in records)
        band = (1.0, (theta - region_measure - base_energy) / min_bubble_energy)
    return EnergyIdentityReport(rows, slope, bubble_energy, base_energy, region_measure, band,
                                extrapolate_log_nu(records))


def _fmt(v):
    return "" if v is None else f"{v:.17g}"


def write_identity_table(report: EnergyIdentityReport, path):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["alpha", "E_alpha", "mu_hat", "nu_hat", "defect", "rel_defect"])
        for r in report.rows:
            w.writerow([_fmt(r.alpha), _fmt(r.E_alpha), _fmt(r.mu_hat), _fmt(r.nu_hat),
                        _fmt(r.defect), _fmt(r.rel_defect)])
