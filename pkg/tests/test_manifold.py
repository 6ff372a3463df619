import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from hypothesis.extra.numpy import arrays

from alphaneck.errors import InvalidBasePoint, PointOutsideTubularNeighborhood
from alphaneck.manifold import (Ellipsoid, UnitSphere, exp_map, make_manifold,
                                project_to_manifold, second_fundamental_form)

S = UnitSphere(3)
E = Ellipsoid((2.0, 1.0, 1.0))

dirs = arrays(np.float64, 3, elements=st.floats(-1, 1)).filter(lambda p: np.linalg.norm(p) > 0.1)
offsets = st.floats(-0.4, 0.4)


def near(N, d, off):
    # a point within the tubular neighbourhood: reach of the (2,1,1) ellipsoid is b^2/a = 0.5
    q = d / np.sqrt(np.sum((d / N.axes) ** 2)) if isinstance(N, Ellipsoid) else d / np.linalg.norm(d)
    return q + off * N.unit_normal(q)


@settings(max_examples=60, deadline=None)
@given(dirs, offsets)
def test_projection_idempotent(d, off):
    for N in (S, E):
        q = N.project(near(N, d, off))
        assert np.allclose(N.project(q), q, atol=1e-10)
        assert N.distance(q) < 1e-10
    assert abs(np.linalg.norm(S.project(3 * d)) - 1) < 1e-12


@settings(max_examples=40, deadline=None)
@given(dirs, offsets)
def test_tangent_projector_symmetric_idempotent(d, off):
    for N in (S, E):
        q = N.project(near(N, d, off))
        P = N.tangent_projector(q)
        assert np.allclose(P, P.T, atol=1e-10)
        assert np.allclose(P @ P, P, atol=1e-10)


def test_project_examples():
    assert np.allclose(project_to_manifold(S, [0, 0, 2.0]), [0, 0, 1])
    assert np.allclose(project_to_manifold(S, [0, 0, 1.0]), [0, 0, 1])
    assert np.allclose(project_to_manifold(E, [3.0, 0, 0]), [2, 0, 0], atol=1e-10)
    with pytest.raises(PointOutsideTubularNeighborhood):
        S.project([0.0, 0.0, 0.0])
    # on the focal segment of the long axis the nearest point is a whole circle
    with pytest.raises(PointOutsideTubularNeighborhood):
        E.project([0.5, 0.0, 0.0])


def test_second_fundamental_form_sphere():
    p = np.array([0, 0, 1.0])
    assert np.allclose(second_fundamental_form(S, p, [1, 0, 0], [1, 0, 0]), [0, 0, -1])
    assert np.allclose(second_fundamental_form(S, p, [1, 0, 0], [0, 1, 0]), 0)
    for N in (S, E):
        q = N.project(np.array([0.3, 0.5, 0.7]))
        assert np.allclose(second_fundamental_form(N, q, [0, 0, 0], [1, 0, 0]), 0)


def test_generic_sff_matches_closed_form():
    # the base-class finite-difference form against the sphere's formula
    from alphaneck.manifold import EmbeddedManifold
    q = S.project(np.array([0.2, -0.4, 0.9]))
    X = S.tangent_project(q, np.array([1.0, 0.3, 0.0]))
    Y = S.tangent_project(q, np.array([0.0, 1.0, -0.5]))
    fd = EmbeddedManifold.second_fundamental_form(S, q, X, Y)
    assert np.allclose(fd, S.second_fundamental_form(q, X, Y), atol=1e-6)


def test_exp_map_sphere():
    p = np.array([1.0, 0, 0])
    assert np.allclose(exp_map(S, p, [0, np.pi / 2, 0]), [0, 1, 0], atol=1e-12)
    assert np.allclose(exp_map(S, p, [0, 0, 0]), p)
    assert np.allclose(exp_map(S, p, [0, 2 * np.pi, 0]), p, atol=1e-12)
    with pytest.raises(InvalidBasePoint):
        exp_map(S, [1.5, 0, 0], [0, 1, 0])


def test_exp_map_ellipsoid_stays_on_and_matches_equator():
    # the equator x^2/4 + y^2 = 1 (z = 0) of axes (2,1,1) is a geodesic by symmetry
    p = np.array([0.0, 1.0, 0.0])
    q = exp_map(E, p, [0.0, 0.0, 1.0])  # the great circle of the unit yz-circle
    assert np.allclose(q, [0.0, np.cos(1.0), np.sin(1.0)], atol=1e-7)
    q = exp_map(E, p, [0.7, 0.0, 0.4])
    assert E.distance(q) < 1e-8


def test_make_manifold():
    assert make_manifold("sphere", 3).kind == "sphere"
    assert make_manifold("ellipsoid", 3, axes=(2, 1, 1)).kind == "ellipsoid"
    with pytest.raises(ValueError):
        make_manifold("torus", 3)
