"""Projected (Sobolev-preconditioned) gradient descent for the alpha-energy and
the alpha -> 1 continuation driver."""
from __future__ import annotations

import json
import os
from dataclasses import dataclass, field

import numpy as np
import scipy.fft as sfft
from scipy import sparse
from scipy.sparse.linalg import splu

from .blowup import BlowupRecord, make_record
from .domain import MapField, PolarGrid, TorusGrid
from .energy import _check_params, _tangent_l2_gradient, energy_and_gradient
from .errors import InvalidOptions, LineSearchStall, NonFiniteValue
from .manifold import EmbeddedManifold, UnitSphere
from .oracles import NORTH, blend_to_constant, bubble_map

__all__ = [
    "SolveOptions",
    "ConvergenceReport",
    "ContinuationSchedule",
    "ContinuationResult",
    "JsonlLog",
    "minimize_alpha_energy",
    "continuation_run",
    "initial_degree_one_map",
    "thread_count",
    "THREADS_ENV",
]

THREADS_ENV = "ALPHANECK_THREADS"


def thread_count() -> int:
    try:
        return max(1, int(os.environ.get(THREADS_ENV, "1")))
    except ValueError:
        return 1


class JsonlLog:
    """Append-only JSON-lines sink; ``None`` path keeps entries in memory only."""

    def __init__(self, path=None):
        self.path = path
        self.entries = []
        if path is not None:
            open(path, "w").close()

    def __call__(self, obj: dict):
        self.entries.append(obj)
        if self.path is not None:
            with open(self.path, "a") as fh:
                fh.write(json.dumps(obj, sort_keys=True, default=_jsonable) + "\n")


def _jsonable(x):
    if isinstance(x, (np.floating, np.integer)):
        return x.item()
    if isinstance(x, np.ndarray):
        return x.tolist()
    raise TypeError(f"cannot serialise {type(x)}")


@dataclass
class SolveOptions:
    max_iters: int = 20000
    grad_tol: float = 1e-6
    armijo: float = 1e-4
    shrink: float = 0.5
    initial_step: float = 1.0
    grow: float = 2.0
    max_step: float = 1e6
    min_step: float = 1e-16
    momentum: float = 0.0
    preconditioner: str = "h1"
    precond_shift: float | None = None
    seed: int = 0
    log_every: int = 100

    def validate(self):
        if not self.grad_tol > 0:
            raise InvalidOptions("grad_tol must be positive")
        if not 0 < self.armijo <= 0.5:
            raise InvalidOptions("armijo constant must lie in (0, 0.5]")
        if not 0 < self.shrink < 1:
            raise InvalidOptions("shrink factor must lie in (0, 1)")
        if not self.initial_step > 0 or not self.grow >= 1:
            raise InvalidOptions("initial_step must be positive and grow >= 1")
        if not 0 <= self.momentum < 1:
            raise InvalidOptions("momentum must lie in [0, 1)")
        if self.preconditioner not in ("h1", "none"):
            raise InvalidOptions(f"unknown preconditioner {self.preconditioner!r}")
        if int(self.max_iters) < 0 or int(self.log_every) < 1:
            raise InvalidOptions("max_iters >= 0 and log_every >= 1 required")
        return self


@dataclass
class ConvergenceReport:
    iters: int
    final_grad_norm: float
    energy_history: list
    converged: bool
    stalled: bool = False
    message: str = ""
    initial_energy: float = float("nan")
    final_step: float = float("nan")


# -- preconditioners --------------------------------------------------------------

class _TorusH1:
    """Solve (c h^2 + L) d = g per component, L the periodic 5-point stiffness."""

    def __init__(self, grid: TorusGrid, shift):
        n, h = grid.n, grid.h
        k = np.arange(n)
        lam1 = 2 - 2 * np.cos(2 * np.pi * k / n)
        c = (2 * np.pi / grid.side) ** 2 if shift is None else shift
        self.den = (c * h * h + lam1[:, None] + lam1[None, :])[..., None]

    def __call__(self, g):
        w = thread_count()
        G = sfft.fft2(g, axes=(0, 1), workers=w)
        return np.real(sfft.ifft2(G / self.den, axes=(0, 1), workers=w))


class _PolarH1:
    """Sparse (c M + K) on free nodes; K weights dtheta/ds (radial) and ds/dtheta (angular)."""

    def __init__(self, grid: PolarGrid, free, shift):
        n0, n1 = grid.shape
        ds, dt = grid.steps
        idx = np.arange(n0 * n1).reshape(n0, n1)
        rows, cols, vals = [], [], []

        def edge(a, b, w):
            rows.extend([a, b, a, b])
            cols.extend([a, b, b, a])
            vals.extend([w, w, -w, -w])

        a = idx[:-1].ravel()
        b = idx[1:].ravel()
        edge(a, b, np.full(a.size, dt / ds))
        a = idx.ravel()
        b = np.roll(idx, -1, axis=1).ravel()
        edge(a, b, np.full(a.size, ds / dt))
        rows = np.concatenate(rows)
        cols = np.concatenate(cols)
        vals = np.concatenate(vals)
        K = sparse.coo_matrix((vals, (rows, cols)), shape=(n0 * n1,) * 2).tocsr()
        c = 1.0 / grid.r_max ** 2 if shift is None else shift
        A = K + c * sparse.diags(grid.flat_weights.ravel())
        self.free = free.ravel()
        fi = np.nonzero(self.free)[0]
        self.fi = fi
        self.lu = splu(A[fi][:, fi].tocsc())
        self.shape = grid.shape

    def __call__(self, g):
        K = g.shape[-1]
        flat = g.reshape(-1, K)
        out = np.zeros_like(flat)
        out[self.fi] = self.lu.solve(np.ascontiguousarray(flat[self.fi]))
        return out.reshape(g.shape)


def _make_preconditioner(u: MapField, opts: SolveOptions):
    if opts.preconditioner == "none":
        return None
    if isinstance(u.grid, TorusGrid):
        return _TorusH1(u.grid, opts.precond_shift)
    return _PolarH1(u.grid, u.free_mask(), opts.precond_shift)


# -- descent ------------------------------------------------------------------

def _retract(u: MapField, base, step, d, fixed):
    vals = u.manifold.project(base + step * d)
    vals[fixed] = base[fixed]
    return vals


def minimize_alpha_energy(u0: MapField, alpha: float, epsilon: float,
                          opts: SolveOptions | None = None, log=None, tag=None):
    """Minimize E_alpha from u0 by retraction-based descent with Armijo backtracking.

    The search direction is the H^1 Riesz representative of dE (torus: FFT;
    polar: sparse factorization), tangent-projected and zero on fixed rings.
    Stops when the quadrature norm of the L2 tangent gradient is <= grad_tol.
    Returns (field, ConvergenceReport); a line-search stall returns the best
    iterate with ``converged = False``.
    """
    opts = (opts or SolveOptions()).validate()
    _check_params(alpha, epsilon)
    if not u0.satisfies_constraint():
        raise ValueError(f"initial field is off the manifold by {u0.constraint_violation():.3e}")
    N = u0.manifold
    W = u0.grid.weights[..., None]
    free = u0.free_mask()
    fixed = ~free
    precond = _make_preconditioner(u0, opts)

    vals = u0.values.copy()
    u = u0.with_values(vals)
    E, g_amb, _ = energy_and_gradient(u, alpha, epsilon)
    hist = [E]
    step = opts.initial_step
    prev_vals = None
    prev_step = None
    it = 0
    stalled = False
    flat_steps = 0
    msg = ""

    def emit(it, E, gn, step):
        if log is not None:
            entry = {"type": "convergence", "alpha": alpha, "epsilon": epsilon, "iter": it,
                     "energy": E, "grad_norm": gn, "step": step}
            if tag is not None:
                entry["tag"] = tag
            log(entry)

    while True:
        grad = _tangent_l2_gradient(u, g_amb)
        gn = float(np.sqrt(np.sum(W * grad * grad)))
        if not np.isfinite(gn):
            raise NonFiniteValue("gradient norm is not finite")
        if it % opts.log_every == 0:
            emit(it, E, gn, step)
        if gn <= opts.grad_tol:
            msg = "grad_tol reached"
            break
        if it >= opts.max_iters:
            msg = "max_iters reached"
            break
        if precond is None:
            d = -grad
        else:
            # precondition the tangential dual vector only; the normal part of
            # dE/du is large and would leak into the direction
            d = -N.tangent_project(vals, precond(W * grad))
            d[fixed] = 0.0
        slope = float(np.sum(W * grad * d))
        if slope >= 0:
            d = -grad
            slope = -gn * gn
        if opts.momentum > 0 and prev_vals is not None:
            m = N.tangent_project(vals, vals - prev_vals) / prev_step
            m[fixed] = 0.0
            dm = d + opts.momentum * m
            sm = float(np.sum(W * grad * dm))
            if sm < 0:
                d, slope = dm, sm
        while True:
            trial = _retract(u, vals, step, d, fixed)
            E_t, g_t, _ = energy_and_gradient(u.with_values(trial), alpha, epsilon)
            if E_t <= E + opts.armijo * step * slope:
                break
            step *= opts.shrink
            if step < opts.min_step:
                stalled = True
                break
        if stalled:
            msg = "line search stalled"
            break
        # accepted steps that no longer change E are roundoff, not progress
        flat_steps = flat_steps + 1 if E - E_t <= 4e-16 * abs(E) else 0
        if flat_steps >= 5:
            stalled = True
            msg = "energy decrease below roundoff"
            break
        prev_vals, prev_step = vals, step
        vals = trial
        u = u.with_values(vals)
        E, g_amb = E_t, g_t
        hist.append(E)
        it += 1
        step = min(step * opts.grow, opts.max_step)
    emit(it, E, gn, step)
    rep = ConvergenceReport(it, gn, hist, gn <= opts.grad_tol, stalled, msg, hist[0], step)
    return u, rep


# -- continuation ----------------------------------------------------------------

def initial_degree_one_map(grid: TorusGrid, manifold: EmbeddedManifold | None = None,
                           scale: float | None = None, blend=(0.3, 0.5)) -> MapField:
    """Bubble of scale side/4 at the domain center, flattened to the pole between
    blend[0]*side and blend[1]*side so that the map is periodic."""
    manifold = UnitSphere(3) if manifold is None else manifold
    side = grid.side
    c = (side / 2, side / 2)
    b = bubble_map(side / 4 if scale is None else scale, c)
    P = grid.positions()
    vals = blend_to_constant(b(P), P, c, blend[0] * side, blend[1] * side, NORTH, manifold)
    return MapField(grid, vals, manifold)


@dataclass
class ContinuationSchedule:
    alpha_list: list
    epsilon: float = 1.0
    solve_options: SolveOptions | list = field(default_factory=SolveOptions)
    resolution_floor: float = 3.0
    grad_threshold: float | None = None
    bubble_R: float | None = 8.0

    def validate(self):
        a = np.asarray(self.alpha_list, dtype=float)
        if a.size == 0 or np.any(a <= 1) or np.any(np.diff(a) >= 0):
            raise InvalidOptions("alpha_list must be strictly decreasing and > 1")
        if self.resolution_floor < 3:
            raise InvalidOptions("resolution_floor must be at least 3 cells")
        if isinstance(self.solve_options, list) and len(self.solve_options) != a.size:
            raise InvalidOptions("one SolveOptions per alpha is required")
        return self

    def options_for(self, k) -> SolveOptions:
        if isinstance(self.solve_options, list):
            return self.solve_options[k]
        return self.solve_options

    def epsilon_for(self, alpha) -> float:
        return float(self.epsilon(alpha)) if callable(self.epsilon) else float(self.epsilon)


@dataclass
class ContinuationResult:
    records: list
    fields: list
    reports: list
    halt_reason: str
    warm_start_energy: list
    fresh_start_energy: list
    error: str | None = None


def continuation_run(u0: MapField, schedule: ContinuationSchedule, log=None,
                     on_stage=None) -> ContinuationResult:
    """Solve along the alpha schedule, warm-starting each stage from the last.

    After each stage a BlowupRecord is taken.  The run halts with
    ``ResolutionFloor`` once lambda_alpha < resolution_floor * h.  A solver
    error ends the run with ``SolverFailure``, keeping earlier stages.
    """
    from .energy import alpha_energy

    schedule.validate()
    recs, fields, reps, warm, fresh = [], [], [], [], []
    u = u0
    halt = "ScheduleExhausted"
    err = None
    h = u0.grid.h if isinstance(u0.grid, TorusGrid) else float(u0.grid.r_min * u0.grid.ds)
    for k, alpha in enumerate(schedule.alpha_list):
        eps = schedule.epsilon_for(alpha)
        warm.append(alpha_energy(u, alpha, eps).total_alpha_energy)
        fresh.append(alpha_energy(u0, alpha, eps).total_alpha_energy)
        try:
            u, rep = minimize_alpha_energy(u, alpha, eps, schedule.options_for(k), log,
                                           tag=f"stage{k}")
        except Exception as exc:  # keep partial results
            halt, err = "SolverFailure", f"{type(exc).__name__}: {exc}"
            break
        rec = make_record(u, alpha, eps, schedule.grad_threshold, schedule.bubble_R)
        recs.append(rec)
        fields.append(u)
        reps.append(rep)
        if log is not None:
            entry = {"type": "record", "stage": k, "converged": rep.converged,
                     "iters": rep.iters, "final_grad_norm": rep.final_grad_norm}
            entry.update(rec.to_dict())
            log(entry)
        if on_stage is not None:
            on_stage(k, u, rec, rep)
        if rec.has_bubble and rec.lambda_alpha < schedule.resolution_floor * h:
            halt = "ResolutionFloor"
            break
    return ContinuationResult(recs, fields, reps, halt, warm, fresh, err)
