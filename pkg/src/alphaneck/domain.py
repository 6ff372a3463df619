"""Discrete 2-D domains: a periodic square grid and a geometric polar annulus.

Both grids are logically rectangular with two computational coordinates
(x, y) for the torus and (s = log r, theta) for the annulus.  The polar chart is
conformal, so a grid stores a per-ring length factor J (1 on the torus, r on the
annulus) plus a conformal factor phi with metric g = e^phi * (flat metric).
"""
from __future__ import annotations

import json
import struct
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from scipy import ndimage

from .errors import AnnulusOutOfBounds, BadRadii, BadResolution
from .manifold import EmbeddedManifold, make_manifold

__all__ = [
    "TorusGrid",
    "PolarGrid",
    "BoundaryCondition",
    "PERIODIC",
    "FREE",
    "dirichlet_ring",
    "MapField",
    "build_torus_grid",
    "build_polar_grid",
    "resample_to_polar",
    "coordinate_derivatives",
    "physical_gradient",
    "save_field",
    "load_field",
]


class Grid:
    kind = "abstract"
    periodic0 = True

    def __init__(self, shape, steps, J, phi):
        self.shape = tuple(int(s) for s in shape)
        self.steps = (float(steps[0]), float(steps[1]))
        self.J = np.asarray(J, dtype=float).reshape(self.shape[0], 1)
        phi = np.zeros(self.shape) if phi is None else np.broadcast_to(
            np.asarray(phi, dtype=float), self.shape).copy()
        self.phi = phi
        trap = np.ones((self.shape[0], 1))
        if not self.periodic0:
            trap[0] = trap[-1] = 0.5
        self.trap0 = trap
        self.flat_weights = self.J ** 2 * self.steps[0] * self.steps[1] * trap * np.ones(self.shape)
        self.weights = self.flat_weights * np.exp(self.phi)
        for a in (self.J, self.flat_weights, self.weights):
            a.setflags(write=False)

    @property
    def measure(self) -> float:
        return float(np.sum(self.weights))

    @property
    def is_flat(self) -> bool:
        return not np.any(self.phi)

    def integrate(self, f) -> float:
        return float(np.sum(self.weights * f))

    def positions(self):
        raise NotImplementedError


class TorusGrid(Grid):
    """n x n periodic nodes x_i = i*h on the square [0, side)^2."""

    kind = "torus"
    periodic0 = True

    def __init__(self, n: int, side: float):
        self.n = int(n)
        self.side = float(side)
        self.h = self.side / self.n
        super().__init__((n, n), (self.h, self.h), np.ones(n), None)

    def coords(self):
        return np.arange(self.n) * self.h

    def positions(self):
        x = self.coords()
        X, Y = np.meshgrid(x, x, indexing="ij")
        return np.stack([X, Y], axis=-1)

    def describe(self) -> dict:
        return {"kind": self.kind, "n": self.n, "side": self.side}

    def __repr__(self):
        return f"TorusGrid(n={self.n}, side={self.side})"


class PolarGrid(Grid):
    """Rings r_i = r_min * rho**i (i = 0..n_r) times n_theta angles.

    Node (i, j) sits at center + r_i (cos theta_j, sin theta_j) with
    theta_j = 2 pi j / n_theta.  Radial quadrature is the trapezoid rule in
    s = log r with weight r^2 ds dtheta.
    """

    kind = "polar"
    periodic0 = False

    def __init__(self, center, r_min, r_max, n_r, n_theta, phi=None):
        self.center = np.asarray(center, dtype=float).reshape(2)
        self.r_min = float(r_min)
        self.r_max = float(r_max)
        self.n_r = int(n_r)
        self.n_theta = int(n_theta)
        self.ds = np.log(self.r_max / self.r_min) / self.n_r
        self.rho = float(np.exp(self.ds))
        self.s = np.log(self.r_min) + self.ds * np.arange(self.n_r + 1)
        self.radii = np.exp(self.s)
        self.radii[-1] = self.r_max
        self.dtheta = 2 * np.pi / self.n_theta
        self.thetas = self.dtheta * np.arange(self.n_theta)
        super().__init__((self.n_r + 1, self.n_theta), (self.ds, self.dtheta), self.radii, phi)

    def positions(self):
        R, T = np.meshgrid(self.radii, self.thetas, indexing="ij")
        return np.stack([self.center[0] + R * np.cos(T), self.center[1] + R * np.sin(T)], axis=-1)

    def ring_index(self, r: float) -> int:
        """Index of the ring nearest to radius r (nearest in log r)."""
        return int(np.clip(np.rint((np.log(r) - self.s[0]) / self.ds), 0, self.n_r))

    def describe(self) -> dict:
        return {"kind": self.kind, "center": self.center.tolist(), "r_min": self.r_min,
                "r_max": self.r_max, "n_r": self.n_r, "n_theta": self.n_theta}

    def __repr__(self):
        return (f"PolarGrid(center={self.center.tolist()}, r=({self.r_min:g}, {self.r_max:g}), "
                f"n_r={self.n_r}, n_theta={self.n_theta})")


def build_torus_grid(n: int, side: float) -> TorusGrid:
    if int(n) != n or n < 16:
        raise BadResolution(f"torus grid needs n >= 16, got {n}")
    if not side > 0:
        raise BadRadii(f"torus side must be positive, got {side}")
    return TorusGrid(int(n), side)


def build_polar_grid(center, r_min, r_max, n_r, n_theta, phi=None) -> PolarGrid:
    if not (0 < r_min < r_max) or not np.isfinite(r_max):
        raise BadRadii(f"need 0 < r_min < r_max, got ({r_min}, {r_max})")
    if int(n_r) != n_r or int(n_theta) != n_theta or n_r < 16 or n_theta < 16:
        raise BadResolution(f"polar grid needs n_r, n_theta >= 16, got ({n_r}, {n_theta})")
    return PolarGrid(center, r_min, r_max, int(n_r), int(n_theta), phi)


# -- boundary conditions and fields ------------------------------------------------

@dataclass(frozen=True)
class BoundaryCondition:
    """Periodic (torus) or ring conditions on a polar grid.

    On a polar grid, ``inner``/``outer`` mark rings held fixed; a ring that is
    not fixed carries the natural (free) condition of the variational problem.
    """

    kind: str = "periodic"
    inner: bool = False
    outer: bool = False

    def free_mask(self, grid: Grid):
        mask = np.ones(grid.shape, dtype=bool)
        if self.kind == "dirichlet":
            if self.inner:
                mask[0] = False
            if self.outer:
                mask[-1] = False
        return mask


PERIODIC = BoundaryCondition("periodic")
FREE = BoundaryCondition("dirichlet")


def dirichlet_ring(inner: bool = True, outer: bool = True) -> BoundaryCondition:
    return BoundaryCondition("dirichlet", inner, outer)


class MapField:
    """Ambient K-vector samples of a map into N on a grid."""

    def __init__(self, grid: Grid, values, manifold: EmbeddedManifold,
                 bc: BoundaryCondition | None = None, constraint_tol: float = 1e-9):
        values = np.asarray(values, dtype=float)
        if values.shape != grid.shape + (manifold.ambient_dim,):
            raise ValueError(f"values shape {values.shape} does not match grid {grid.shape} "
                             f"and K={manifold.ambient_dim}")
        if bc is None:
            bc = PERIODIC if grid.kind == "torus" else FREE
        if grid.kind == "torus" and bc.kind != "periodic":
            raise ValueError("torus fields are periodic")
        if grid.kind == "polar" and bc.kind == "periodic":
            raise ValueError("polar fields take ring conditions")
        self.grid = grid
        self.values = values
        self.manifold = manifold
        self.bc = bc
        self.constraint_tol = float(constraint_tol)

    @property
    def K(self) -> int:
        return self.manifold.ambient_dim

    def free_mask(self):
        return self.bc.free_mask(self.grid)

    def with_values(self, values) -> "MapField":
        return MapField(self.grid, values, self.manifold, self.bc, self.constraint_tol)

    def copy(self) -> "MapField":
        return self.with_values(self.values.copy())

    def constraint_violation(self) -> float:
        return float(np.max(self.manifold.distance(self.values)))

    def satisfies_constraint(self) -> bool:
        return self.constraint_violation() <= self.constraint_tol


# -- finite differences ---------------------------------------------------------

def coordinate_derivatives(grid: Grid, f):
    """Centered derivatives of f along both computational axes.

    The periodic axes use the centered stencil with wraparound; the radial axis
    of a polar grid uses one-sided second-order stencils at its two end rings.
    """
    f = np.asarray(f, dtype=float)
    d0, d1 = grid.steps
    f1 = (np.roll(f, -1, axis=1) - np.roll(f, 1, axis=1)) / (2 * d1)
    if grid.periodic0:
        f0 = (np.roll(f, -1, axis=0) - np.roll(f, 1, axis=0)) / (2 * d0)
    else:
        f0 = np.empty_like(f)
        f0[1:-1] = (f[2:] - f[:-2]) / (2 * d0)
        f0[0] = (-3 * f[0] + 4 * f[1] - f[2]) / (2 * d0)
        f0[-1] = (3 * f[-1] - 4 * f[-2] + f[-3]) / (2 * d0)
    return f0, f1


def physical_gradient(grid: Grid, f):
    """Gradient components in the flat orthonormal frame.

    Torus: (df/dx, df/dy).  Polar: (df/dr, (1/r) df/dtheta).
    """
    f0, f1 = coordinate_derivatives(grid, f)
    J = grid.J if np.ndim(f) == 2 else grid.J[..., None]
    return f0 / J, f1 / J


# -- resampling -----------------------------------------------------------------

def resample_to_polar(field: MapField, polar: PolarGrid, order: int = 1) -> MapField:
    """Interpolate a torus field onto a polar annulus, then project onto N.

    order=1 is bilinear interpolation; order=3 uses periodic cubic splines.
    """
    grid = field.grid
    if grid.kind != "torus":
        raise ValueError("resampling source must live on a torus grid")
    if polar.r_max > grid.side / 2:
        raise AnnulusOutOfBounds(f"annulus radius {polar.r_max} exceeds half the side {grid.side / 2}")
    pos = polar.positions().reshape(-1, 2) / grid.h
    coords = [pos[:, 0], pos[:, 1]]
    out = np.empty(polar.shape + (field.K,))
    for k in range(field.K):
        out[..., k] = ndimage.map_coordinates(field.values[..., k], coords, order=order,
                                              mode="grid-wrap").reshape(polar.shape)
    out = field.manifold.project(out)
    return MapField(polar, out, field.manifold, FREE, field.constraint_tol)


# -- serialization --------------------------------------------------------------

_MAGIC = b"ANMF"
_KIND_CODE = {"torus": 1, "polar": 2}


def save_field(field: MapField, path) -> tuple[Path, Path]:
    """Write ``path`` (binary header + row-major float64 payload) and ``path.json``."""
    path = Path(path)
    n0, n1 = field.grid.shape
    header = _MAGIC + struct.pack("<5I", 1, _KIND_CODE[field.grid.kind], n0, n1, field.K)
    with open(path, "wb") as fh:
        fh.write(header)
        fh.write(np.ascontiguousarray(field.values, dtype="<f8").tobytes())
    side = {
        "grid": field.grid.describe(),
        "phi_is_zero": bool(field.grid.is_flat),
        "boundary": {"kind": field.bc.kind, "inner": field.bc.inner, "outer": field.bc.outer},
        "manifold": field.manifold.describe(),
        "constraint_tol": field.constraint_tol,
    }
    if not field.grid.is_flat:
        side["phi"] = field.grid.phi.tolist()
    sidecar = path.with_name(path.name + ".json")
    sidecar.write_text(json.dumps(side, indent=2, sort_keys=True))
    return path, sidecar


def load_field(path) -> MapField:
    path = Path(path)
    side = json.loads(path.with_name(path.name + ".json").read_text())
    raw = path.read_bytes()
    if raw[:4] != _MAGIC:
        raise ValueError("not a field file")
    _, kind, n0, n1, K = struct.unpack("<5I", raw[4:24])
    values = np.frombuffer(raw[24:], dtype="<f8").reshape(n0, n1, K).copy()
    g = side["grid"]
    if kind == _KIND_CODE["torus"]:
        grid = build_torus_grid(g["n"], g["side"])
    else:
        grid = build_polar_grid(g["center"], g["r_min"], g["r_max"], g["n_r"], g["n_theta"],
                                side.get("phi"))
    m = side["manifold"]
    manifold = make_manifold(m["kind"], m["ambient_dim"], m.get("axes"), m["proj_tol"],
                             m.get("known_min_bubble_energy"))
    b = side["boundary"]
    bc = BoundaryCondition(b["kind"], b["inner"], b["outer"])
    return MapField(grid, values, manifold, bc, side["constraint_tol"])
