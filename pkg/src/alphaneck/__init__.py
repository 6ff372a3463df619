"""Numerical toolkit for alpha-harmonic maps from planar domains into spheres
and ellipsoids: alpha-energy minimization, blow-up detection, energy-identity
defects and neck geometry."""

__version__ = "0.1.0"

from .errors import *  # noqa: F401,F403
from .manifold import EmbeddedManifold, UnitSphere, Ellipsoid, make_manifold  # noqa: F401
from .domain import (TorusGrid, PolarGrid, MapField, BoundaryCondition,  # noqa: F401
                     build_torus_grid, build_polar_grid)
from .energy import alpha_energy, alpha_energy_gradient, el_residual  # noqa: F401
from .solver import SolveOptions, minimize_alpha_energy, continuation_run  # noqa: F401
