"""Closed-form reference maps into S^2 and an independent quadrature integrator.

Samplers are callables taking an array of planar positions (..., 2) and
returning points of S^2 in R^3 with shape (..., 3).
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy import integrate

from .domain import FREE, MapField, PolarGrid, build_polar_grid
from .errors import BandTooNarrow, NoConvergence
from .manifold import UnitSphere

__all__ = [
    "inv_stereo",
    "smootherstep",
    "BubbleMap",
    "bubble_map",
    "EquatorMap",
    "equator_map",
    "LogNeckMap",
    "log_neck_map",
    "fill",
    "blend_to_constant",
    "rotation_taking",
    "axis_rotation",
    "SyntheticFamilyParams",
    "SyntheticFamily",
    "synthetic_neck_family",
    "quadrature_oracle",
    "extrapolated_bubble_energy",
    "NORTH",
]

NORTH = np.array([0.0, 0.0, 1.0])
_S2 = UnitSphere(3)


def inv_stereo(z):
    """Orientation-preserving inverse stereographic map C -> S^2: 0 -> (0,0,-1), inf -> N."""
    z = np.asarray(z, dtype=complex)
    a = np.abs(z) ** 2
    return np.stack([2 * z.real / (1 + a), -2 * z.imag / (1 + a), (a - 1) / (1 + a)], axis=-1)


def smootherstep(x):
    x = np.clip(x, 0.0, 1.0)
    return x * x * x * (x * (6 * x - 15) + 10)


def _complex(P, center, scale=1.0):
    P = np.asarray(P, dtype=float)
    return ((P[..., 0] - center[0]) + 1j * (P[..., 1] - center[1])) / scale


@dataclass(frozen=True)
class BubbleMap:
    """x -> invStereo(((x - c)/lam)^d), harmonic of energy 8 pi d."""

    lam: float
    center: tuple = (0.0, 0.0)
    degree: int = 1

    def __call__(self, P):
        z = _complex(P, self.center, self.lam)
        return inv_stereo(z ** self.degree)

    def density(self, P):
        """|grad u|^2 in closed form."""
        rho2 = np.abs(_complex(P, self.center, self.lam)) ** 2
        d = self.degree
        return 8 * d * d * rho2 ** (d - 1) / (self.lam ** 2 * (1 + rho2 ** d) ** 2)

    def energy_in_ball(self, R: float) -> float:
        """Dirichlet energy over B_R(center); R in physical units."""
        q = (R / self.lam) ** (2 * self.degree)
        return 8 * np.pi * self.degree * q / (1 + q)

    @property
    def total_energy(self) -> float:
        return 8 * np.pi * self.degree

    @property
    def max_gradient(self) -> float:
        """Frobenius max |grad u|; attained at the center for d = 1."""
        if self.degree == 1:
            return 2 * np.sqrt(2) / self.lam
        d = self.degree
        # maximize 8 d^2 q^(d-1) / (1+q^d)^2 over q = rho^2
        q = ((d - 1) / (d + 1)) ** (1.0 / d)
        return float(np.sqrt(8 * d * d * q ** (d - 1) / (1 + q ** d) ** 2) / self.lam)


def bubble_map(lam: float, center=(0.0, 0.0), degree: int = 1) -> BubbleMap:
    if degree not in (1, 2, 3):
        raise ValueError("bubble degree must be 1, 2 or 3")
    if not lam > 0:
        raise ValueError("bubble scale must be positive")
    return BubbleMap(float(lam), tuple(float(c) for c in center), int(degree))


@dataclass(frozen=True)
class EquatorMap:
    """(r, theta) -> (cos theta, sin theta, 0) on the annulus a < r < b."""

    a: float
    b: float
    center: tuple = (0.0, 0.0)

    def __call__(self, P):
        z = _complex(P, self.center)
        th = np.angle(z)
        return np.stack([np.cos(th), np.sin(th), np.zeros_like(th)], axis=-1)

    def density(self, P):
        return 1.0 / np.abs(_complex(P, self.center)) ** 2

    @property
    def total_energy(self) -> float:
        return 2 * np.pi * np.log(self.b / self.a)


def equator_map(a: float, b: float, center=(0.0, 0.0)) -> EquatorMap:
    if not 0 < a < b:
        raise ValueError("need 0 < a < b")
    return EquatorMap(float(a), float(b), tuple(float(c) for c in center))


@dataclass(frozen=True)
class LogNeckMap:
    """theta-independent neck x -> exp_y(sqrt(alpha-1) a log(|x - c| / r_ref)) on S^2."""

    y: tuple
    a_vec: tuple
    alpha: float
    r_ref: float = 1.0
    center: tuple = (0.0, 0.0)

    def curve(self, r):
        y = np.asarray(self.y, dtype=float)
        a = np.asarray(self.a_vec, dtype=float)
        x = np.sqrt(self.alpha - 1) * np.log(np.asarray(r, dtype=float) / self.r_ref)
        return _S2.exp_map(y, x[..., None] * a) if np.ndim(x) else _S2.exp_map(y, x * a)

    def __call__(self, P):
        r = np.abs(_complex(P, self.center))
        return self.curve(r)


def log_neck_map(y, a_vec, alpha, r_ref=1.0, center=(0.0, 0.0)) -> LogNeckMap:
    y = np.asarray(y, dtype=float)
    y = y / np.linalg.norm(y)
    a = np.asarray(a_vec, dtype=float)
    a = a - np.dot(a, y) * y
    return LogNeckMap(tuple(y), tuple(a), float(alpha), float(r_ref),
                      tuple(float(c) for c in center))


def fill(grid, sampler, manifold=None, bc=None, constraint_tol=1e-9) -> MapField:
    """Materialize a sampler on a grid (values projected onto the target)."""
    manifold = _S2 if manifold is None else manifold
    vals = manifold.project(sampler(grid.positions()))
    return MapField(grid, vals, manifold, bc, constraint_tol)


def blend_to_constant(values, P, center, r0, r1, target=NORTH, manifold=None):
    """Blend the values to a constant for |x - c| in [r0, r1] (ambient blend, then project)."""
    manifold = _S2 if manifold is None else manifold
    r = np.hypot(P[..., 0] - center[0], P[..., 1] - center[1])
    w = smootherstep((r - r0) / (r1 - r0))[..., None]
    return manifold.project((1 - w) * values + w * np.asarray(target, dtype=float))


def axis_rotation(axis, angle):
    """Rotation matrices about a unit axis by (array of) angles."""
    k = np.asarray(axis, dtype=float)
    k = k / np.linalg.norm(k)
    Kx = np.array([[0, -k[2], k[1]], [k[2], 0, -k[0]], [-k[1], k[0], 0]])
    angle = np.asarray(angle, dtype=float)[..., None, None]
    return np.eye(3) + np.sin(angle) * Kx + (1 - np.cos(angle)) * (Kx @ Kx)


def rotation_taking(a, b):
    """A rotation matrix taking unit vector a to unit vector b."""
    a = np.asarray(a, dtype=float) / np.linalg.norm(a)
    b = np.asarray(b, dtype=float) / np.linalg.norm(b)
    c = float(np.dot(a, b))
    k = np.cross(a, b)
    sn = np.linalg.norm(k)
    if sn < 1e-14:
        if c > 0:
            return np.eye(3)
        # half-turn about any axis orthogonal to a
        e = np.eye(3)[np.argmin(np.abs(a))]
        k = np.cross(a, e)
        return axis_rotation(k, np.pi)
    return axis_rotation(k / sn, np.arctan2(sn, c))


# -- synthetic bubble + neck + body families -------------------------------------

@dataclass
class SyntheticFamilyParams:
    """Bubble of scale lam, a great-circle neck over r in [lam^t1, lam^t2], constant body.

    ``a_vec`` is tangent at the junction point ``y``.  When ``calibrated`` the
    neck speed follows |a(t)| = mu^(1-t) sqrt(E_d/pi) with mu = lam^(2-2 alpha)
    and only the direction of ``a_vec`` is used; otherwise |a_vec| is used as a
    constant norm (None means sqrt(E_d/pi)).
    """

    alpha: float = 1.05
    lam: float = 1e-3
    t2: float = 0.02
    t1: float = 0.98
    y: tuple = (1.0, 0.0, 0.0)
    a_vec: tuple | None = (0.0, 1.0, 0.0)
    degree: int = 1
    blend_width: float = 0.1
    calibrated: bool = True

    def validate(self):
        if not 0 < self.lam < 1:
            raise ValueError("lam must lie in (0, 1)")
        if not self.alpha > 1:
            raise ValueError("alpha must exceed 1")
        if not 0 < self.t2 < self.t1 < 1:
            raise ValueError("need 0 < t2 < t1 < 1")
        if self.degree not in (1, 2, 3):
            raise ValueError("degree must be 1, 2 or 3")
        if not self.blend_width > 0:
            raise ValueError("blend_width must be positive")
        span = (self.t1 - self.t2) * abs(np.log(self.lam))
        if span < 2 * self.blend_width:
            raise BandTooNarrow(f"band spans {span:.3g} in log r; the two blends need "
                                f"{2 * self.blend_width:.3g}")


@dataclass
class SyntheticFamily:
    params: SyntheticFamilyParams
    y: np.ndarray
    a_hat: np.ndarray
    bubble_energy: float
    mu_hat: float
    nu_hat: float
    body: np.ndarray
    tau: np.ndarray = field(repr=False)
    angle: np.ndarray = field(repr=False)

    @property
    def lam(self) -> float:
        return self.params.lam

    def a_norm(self, t):
        p = self.params
        if p.calibrated:
            return self.mu_hat ** (1 - np.asarray(t)) * np.sqrt(self.bubble_energy / np.pi)
        if p.a_vec is None:
            return np.sqrt(self.bubble_energy / np.pi) + 0 * np.asarray(t)
        return np.linalg.norm(p.a_vec) + 0 * np.asarray(t)

    def a_at(self, t):
        """Ambient vector a(t) at y."""
        return self.a_norm(t) * self.a_hat

    def neck_angle(self, r):
        """Great-circle angle travelled from y at radius r."""
        return np.interp(np.log(r), self.tau, self.angle)

    def window(self, tau):
        p = self.params
        t_in, t_out = p.t1 * np.log(p.lam), p.t2 * np.log(p.lam)
        w = p.blend_width
        return smootherstep((tau - t_in) / w) * smootherstep((t_out - tau) / w)

    def __call__(self, P):
        p = self.params
        P = np.asarray(P, dtype=float)
        r = np.hypot(P[..., 0], P[..., 1])
        v = bubble_map(p.lam, (0.0, 0.0), p.degree)(P)
        # the bubble tail is flattened to the pole across the outer blend
        tau_out = p.t2 * np.log(p.lam)
        with np.errstate(divide="ignore"):
            tau = np.log(np.where(r > 0, r, 1e-300))
        wt = smootherstep((tau - (tau_out - p.blend_width)) / p.blend_width)[..., None]
        v = _S2.project((1 - wt) * v + wt * NORTH)
        Q0 = rotation_taking(NORTH, self.y)
        axis = np.cross(self.y, self.a_hat)
        R = axis_rotation(axis, np.interp(tau, self.tau, self.angle))
        return np.einsum("...ij,jk,...k->...i", R, Q0, v)

    def default_grid(self, n_r=384, n_theta=64, r_min=1e-5, r_max=1.0) -> PolarGrid:
        return build_polar_grid((0.0, 0.0), r_min, r_max, n_r, n_theta)


def synthetic_neck_family(params: SyntheticFamilyParams | None = None, grid=None,
                          n_quad: int = 200001):
    """Build the family; returns (MapField or None, SyntheticFamily).

    The neck is u = Rot(s(r)) Q0 v(x): v the bubble, Q0 a rotation taking the
    pole to y, Rot(s) the rotation about y x a_hat by the angle
    s(r) = int sqrt(alpha-1) |a(t)| window d(log r), t = log r / log lam.
    """
    params = SyntheticFamilyParams() if params is None else params
    params.validate()
    y = np.asarray(params.y, dtype=float)
    y = y / np.linalg.norm(y)
    if params.a_vec is None:
        a = np.eye(3)[np.argmin(np.abs(y))]
    else:
        a = np.asarray(params.a_vec, dtype=float)
    a = a - np.dot(a, y) * y
    if np.linalg.norm(a) == 0:
        raise ValueError("a_vec must have a nonzero tangent part at y")
    a_hat = a / np.linalg.norm(a)
    lam, alpha = params.lam, params.alpha
    mu = lam ** (2 - 2 * alpha)
    nu = lam ** (-np.sqrt(alpha - 1))
    E = 8 * np.pi * params.degree
    fam = SyntheticFamily(params, y, a_hat, E, mu, nu, np.zeros(3), np.zeros(2), np.zeros(2))
    t_in, t_out = params.t1 * np.log(lam), params.t2 * np.log(lam)
    tau = np.linspace(t_in, t_out, n_quad)
    rate = np.sqrt(alpha - 1) * fam.a_norm(tau / np.log(lam)) * fam.window(tau)
    fam.tau = tau
    fam.angle = integrate.cumulative_trapezoid(rate, tau, initial=0.0)
    Q0 = rotation_taking(NORTH, y)
    fam.body = axis_rotation(np.cross(y, a_hat), fam.angle[-1]) @ Q0 @ NORTH
    if grid is None:
        return None, fam
    return fill(grid, fam, _S2, FREE), fam


# -- quadrature ---------------------------------------------------------------

def _region_integral(f, region, tol):
    kind = region[0]
    opts = {"epsabs": tol * 0.1, "epsrel": 1e-13, "limit": 200}
    if kind == "square":
        x0, x1, y0, y1 = region[1:5]
        val, err = integrate.nquad(lambda y, x: f(x, y), [[y0, y1], [x0, x1]], opts=[opts, opts])
        return val, err
    if kind in ("disk", "annulus"):
        if kind == "disk":
            a, b = 0.0, region[1]
            c = region[2] if len(region) > 2 else (0.0, 0.0)
        else:
            a, b = region[1], region[2]
            c = region[3] if len(region) > 3 else (0.0, 0.0)

        def g(th, r):
            return f(c[0] + r * np.cos(th), c[1] + r * np.sin(th)) * r

        return integrate.nquad(g, [[0.0, 2 * np.pi], [a, b]], opts=[opts, opts])
    raise ValueError(f"unknown region {kind!r}")


def quadrature_oracle(density, region, tol: float = 1e-10, R0: float = 8.0,
                      max_doublings: int = 16) -> float:
    """Adaptive integral of a scalar density f(x, y) over a region.

    region: ("square", x0, x1, y0, y1) | ("disk", R[, center]) |
    ("annulus", a, b[, center]) | ("plane"[, center]).  The plane is handled by
    doubling a truncation radius with Richardson extrapolation against an
    R^-2 tail until successive extrapolations agree to tol.
    """
    if region[0] != "plane":
        val, err = _region_integral(density, region, tol)
        if not np.isfinite(val) or err > max(tol, 1e-13 * abs(val)) * 10:
            raise NoConvergence(f"adaptive quadrature error estimate {err:.3g} above tolerance")
        return float(val)
    c = region[1] if len(region) > 1 else (0.0, 0.0)
    R = R0
    prev_E = _region_integral(density, ("disk", R, c), tol * 1e-2)[0]
    prev_x = None
    for _ in range(max_doublings):
        R *= 2
        E = _region_integral(density, ("disk", R, c), tol * 1e-2)[0]
        x = (4 * E - prev_E) / 3
        if prev_x is not None and abs(x - prev_x) < tol:
            return float(x)
        prev_E, prev_x = E, x
    raise NoConvergence("truncation-radius extrapolation did not settle")


def extrapolated_bubble_energy(bubble: BubbleMap, R: float = 4.0, n_r: int = 128,
                               n_theta: int = 256, r_min_factor: float = 1e-3):
    """Grid energy of a bubble over B_R and B_2R (radii in units of lam), extrapolated in R.

    Returns (E_inf, E_R, E_2R).  The disk inside the innermost ring is added
    with its area times the innermost-ring mean density.
    """
    from .energy import alpha_energy

    vals = []
    for rr in (R, 2 * R):
        g = build_polar_grid(bubble.center, r_min_factor * bubble.lam, rr * bubble.lam,
                             n_r, n_theta)
        u = fill(g, bubble)
        e = alpha_energy(u, 1.0, 0.0)
        inner = float(np.mean(e.density[0])) * np.pi * g.r_min ** 2
        vals.append(e.dirichlet_energy + inner)
    return (4 * vals[1] - vals[0]) / 3, vals[0], vals[1]
