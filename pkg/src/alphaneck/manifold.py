"""Embedded target manifolds N in R^K.

Sign convention: ``second_fundamental_form(p, X, Y)`` is the normal part of the
ambient derivative of a tangent field, so for the unit sphere it equals
``-<X, Y> p``.  With this convention a geodesic solves ``g'' = A(g)(g', g')``
and the harmonic map equation reads ``lap u - A(u)(du, du) = 0``.
"""
from __future__ import annotations

import numpy as np

from .errors import InvalidBasePoint, IntegrationFailure, PointOutsideTubularNeighborhood

__all__ = [
    "EmbeddedManifold",
    "UnitSphere",
    "Ellipsoid",
    "make_manifold",
    "project_to_manifold",
    "second_fundamental_form",
    "exp_map",
]


def _dot(a, b):
    return np.sum(a * b, axis=-1)


class EmbeddedManifold:
    """A hypersurface of R^K given by a nearest-point projection.

    Subclasses provide ``project`` and ``unit_normal``; the second fundamental
    form and the exponential map have generic implementations built on them.
    """

    kind = "abstract"

    def __init__(self, ambient_dim: int, proj_tol: float = 1e-12,
                 known_min_bubble_energy: float | None = None):
        if ambient_dim < 2:
            raise ValueError("ambient_dim must be at least 2")
        if not proj_tol > 0:
            raise ValueError("proj_tol must be positive")
        self.ambient_dim = int(ambient_dim)
        self.proj_tol = float(proj_tol)
        self.known_min_bubble_energy = known_min_bubble_energy

    # -- interface -----------------------------------------------------------
    def project(self, p):
        raise NotImplementedError

    def unit_normal(self, p):
        raise NotImplementedError

    @property
    def length_scale(self) -> float:
        return 1.0

    def describe(self) -> dict:
        return {"kind": self.kind, "ambient_dim": self.ambient_dim,
                "proj_tol": self.proj_tol,
                "known_min_bubble_energy": self.known_min_bubble_energy}

    # -- tangent calculus ----------------------------------------------------
    def distance(self, p):
        p = np.asarray(p, dtype=float)
        return np.linalg.norm(p - self.project(p), axis=-1)

    def check_on_manifold(self, p, tol=None):
        tol = 10 * self.proj_tol if tol is None else tol
        d = self.distance(p)
        if np.any(d > tol):
            raise InvalidBasePoint(f"base point off the manifold by {np.max(d):.3e}")

    def tangent_project(self, p, v):
        """Remove the normal component of v at p (p assumed on N)."""
        n = self.unit_normal(p)
        return v - _dot(v, n)[..., None] * n

    def normal_component(self, p, v):
        n = self.unit_normal(p)
        return _dot(v, n)[..., None] * n

    def tangent_projector(self, p):
        n = self.unit_normal(p)
        eye = np.eye(self.ambient_dim)
        return eye - n[..., :, None] * n[..., None, :]

    def second_fundamental_form(self, p, X, Y):
        """Second derivative of the nearest-point projection along (X, Y).

        Central differences at step 1e-5 of the local length scale; the result
        is projected onto the normal line to remove finite-difference noise.
        """
        p = np.asarray(p, dtype=float)
        X = self.tangent_project(p, np.asarray(X, dtype=float))
        Y = self.tangent_project(p, np.asarray(Y, dtype=float))
        nx = np.linalg.norm(X, axis=-1)
        ny = np.linalg.norm(Y, axis=-1)
        scale = np.where(nx * ny > 0, nx * ny, 1.0)
        xh = X / np.where(nx > 0, nx, 1.0)[..., None]
        yh = Y / np.where(ny > 0, ny, 1.0)[..., None]
        h = 1e-5 * self.length_scale
        pp = self.project(p + h * (xh + yh))
        pm = self.project(p + h * (xh - yh))
        mp = self.project(p - h * (xh - yh))
        mm = self.project(p - h * (xh + yh))
        A = (pp - pm - mp + mm) / (4 * h * h)
        A = self.normal_component(p, A) * (scale * (nx * ny > 0))[..., None]
        return A

    # -- geodesics -----------------------------------------------------------
    def _geodesic_rhs(self, x, v):
        q = self.project(x)
        vt = self.tangent_project(q, v)
        return v, self.second_fundamental_form(q, vt, vt)

    def _rk4(self, x, v, h):
        k1x, k1v = self._geodesic_rhs(x, v)
        k2x, k2v = self._geodesic_rhs(x + 0.5 * h * k1x, v + 0.5 * h * k1v)
        k3x, k3v = self._geodesic_rhs(x + 0.5 * h * k2x, v + 0.5 * h * k2v)
        k4x, k4v = self._geodesic_rhs(x + h * k3x, v + h * k3v)
        return (x + h / 6 * (k1x + 2 * k2x + 2 * k3x + k4x),
                v + h / 6 * (k1v + 2 * k2v + 2 * k3v + k4v))

    def _integrate(self, x, v, s_end, tol=1e-8, h_min=1e-10):
        """Adaptive RK4 (step doubling) from parameter 0 to s_end."""
        s = 0.0
        speed = max(np.linalg.norm(v), 1e-300)
        h = min(s_end, 0.05 * self.length_scale / speed) if s_end > 0 else 0.0
        while s < s_end * (1 - 1e-15):
            h = min(h, s_end - s)
            x1, v1 = self._rk4(x, v, h)
            xh, vh = self._rk4(x, v, 0.5 * h)
            x2, v2 = self._rk4(xh, vh, 0.5 * h)
            err = max(np.max(np.abs(x2 - x1)), np.max(np.abs(v2 - v1)) / speed)
            if err <= tol * self.length_scale or h <= h_min:
                if h <= h_min and err > tol * self.length_scale:
                    raise IntegrationFailure("geodesic step size underflow")
                s += h
                x, v = x2 + (x2 - x1) / 15.0, v2 + (v2 - v1) / 15.0
                q = self.project(x)
                v = self.tangent_project(q, v)
                x = q
                if err > 0:
                    h = h * min(2.0, 0.9 * (tol * self.length_scale / err) ** 0.2)
                else:
                    h = 2 * h
            else:
                h = h * max(0.1, 0.9 * (tol * self.length_scale / err) ** 0.2)
        return x, v

    def exp_map(self, p, v):
        p = np.asarray(p, dtype=float)
        v = np.asarray(v, dtype=float)
        self.check_on_manifold(p)
        v = self.tangent_project(p, v)
        if np.linalg.norm(v) == 0:
            return p.copy()
        x, _ = self._integrate(p.copy(), v.copy(), 1.0)
        return x

    def geodesic(self, p, v, s):
        """Points of the geodesic with initial data (p, v) at parameters s (sorted, >= 0)."""
        p = np.asarray(p, dtype=float)
        v = self.tangent_project(p, np.asarray(v, dtype=float))
        s = np.asarray(s, dtype=float)
        out = np.empty(s.shape + p.shape)
        x, w, s_prev = p.copy(), v.copy(), 0.0
        for i, si in enumerate(s):
            if si < s_prev:
                raise ValueError("geodesic parameters must be nondecreasing")
            if si > s_prev:
                x, w = self._integrate(x, w, si - s_prev)
            out[i] = x
            s_prev = si
        return out


class UnitSphere(EmbeddedManifold):
    """The unit sphere S^{K-1} with closed-form projection, A and exp."""

    kind = "sphere"

    def project(self, p):
        p = np.asarray(p, dtype=float)
        r = np.linalg.norm(p, axis=-1, keepdims=True)
        if np.any(r == 0):
            raise PointOutsideTubularNeighborhood("cannot project the origin onto the sphere")
        return p / r

    def unit_normal(self, p):
        p = np.asarray(p, dtype=float)
        return p / np.linalg.norm(p, axis=-1, keepdims=True)

    def tangent_project(self, p, v):
        return v - _dot(v, p)[..., None] * p

    def second_fundamental_form(self, p, X, Y):
        p = np.asarray(p, dtype=float)
        X = self.tangent_project(p, np.asarray(X, dtype=float))
        Y = self.tangent_project(p, np.asarray(Y, dtype=float))
        return -_dot(X, Y)[..., None] * p

    def exp_map(self, p, v):
        p = np.asarray(p, dtype=float)
        self.check_on_manifold(p)
        v = self.tangent_project(p, np.asarray(v, dtype=float))
        th = np.linalg.norm(v, axis=-1, keepdims=True)
        safe = np.where(th > 0, th, 1.0)
        return np.cos(th) * p + np.sin(th) * v / safe

    def geodesic(self, p, v, s):
        p = np.asarray(p, dtype=float)
        v = self.tangent_project(p, np.asarray(v, dtype=float))
        s = np.asarray(s, dtype=float)[..., None]
        th = np.linalg.norm(v)
        if th == 0:
            return np.broadcast_to(p, s.shape[:-1] + p.shape).copy()
        return np.cos(th * s) * p + np.sin(th * s) * (v / th)


class Ellipsoid(EmbeddedManifold):
    """Axis-aligned ellipsoid sum(x_i^2 / a_i^2) = 1, projected by Newton's method."""

    kind = "ellipsoid"

    def __init__(self, axes, proj_tol: float = 1e-10, known_min_bubble_energy=None,
                 max_iter: int = 200):
        axes = np.asarray(axes, dtype=float)
        if axes.ndim != 1 or np.any(axes <= 0):
            raise ValueError("ellipsoid semi-axes must be positive")
        super().__init__(axes.size, proj_tol, known_min_bubble_energy)
        self.axes = axes
        self.max_iter = max_iter

    @property
    def length_scale(self) -> float:
        return float(np.max(self.axes))

    def describe(self) -> dict:
        d = super().describe()
        d["axes"] = self.axes.tolist()
        return d

    def project(self, p):
        """Nearest point by Newton iteration on the Lagrange multiplier.

        x_i = p_i a_i^2 / (a_i^2 + t) with t the root of
        g(t) = sum (a_i p_i / (a_i^2 + t))^2 - 1, which is convex and decreasing,
        so Newton started left of the root converges monotonically.
        """
        p = np.asarray(p, dtype=float)
        a2 = self.axes ** 2
        flat = p.reshape(-1, self.ambient_dim)
        if np.any(np.all(flat == 0, axis=-1)):
            raise PointOutsideTubularNeighborhood("the center has no unique nearest point")
        amin2 = a2.min()
        t = np.max(self.axes * np.abs(flat) - a2, axis=-1)
        t = np.maximum(t, -amin2 * (1 - 1e-12))
        c = (self.axes * flat) ** 2
        g0 = np.sum(c / (a2 + t[:, None]) ** 2, axis=-1) - 1.0
        if np.any(g0 < 0):
            # no root right of -min(a^2): p sits on the focal set, nearest point not unique
            raise PointOutsideTubularNeighborhood("point lies on the focal set of the ellipsoid")
        done = np.zeros(t.shape, dtype=bool)
        for _ in range(self.max_iter):
            den = a2 + t[:, None]
            g = np.sum(c / den ** 2, axis=-1) - 1.0
            dg = -2.0 * np.sum(c / den ** 3, axis=-1)
            step = g / dg
            t_new = t - step
            t = np.where(done, t, t_new)
            done |= np.abs(step) <= 1e-15 * (np.abs(t) + amin2)
            if np.all(done):
                break
        else:
            raise PointOutsideTubularNeighborhood("Newton projection did not converge")
        x = flat * a2 / (a2 + t[:, None])
        return x.reshape(p.shape)

    def unit_normal(self, p):
        n = np.asarray(p, dtype=float) / self.axes ** 2
        return n / np.linalg.norm(n, axis=-1, keepdims=True)


def make_manifold(kind: str, ambient_dim: int = 3, axes=None, proj_tol=None,
                  known_min_bubble_energy=None) -> EmbeddedManifold:
    kind = kind.lower()
    if kind in ("sphere", "unitsphere", "unit_sphere"):
        return UnitSphere(ambient_dim, 1e-12 if proj_tol is None else proj_tol,
                          known_min_bubble_energy)
    if kind == "ellipsoid":
        if axes is None:
            raise ValueError("ellipsoid needs axes")
        return Ellipsoid(axes, 1e-10 if proj_tol is None else proj_tol,
                         known_min_bubble_energy)
    raise ValueError(f"unknown manifold kind {kind!r}")


def project_to_manifold(N: EmbeddedManifold, p):
    return N.project(p)


def second_fundamental_form(N: EmbeddedManifold, p, X, Y):
    N.check_on_manifold(p)
    return N.second_fundamental_form(p, X, Y)


def exp_map(N: EmbeddedManifold, p, v):
    return N.exp_map(p, v)
