"""Quadrature and scaled-monomial tests against exact moment oracles."""

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from numpy.polynomial import Polynomial

import oracles
from platevem.quadrature import (ScaledMonomialBasis, edge_quadrature,
                                 gauss_legendre_01, monomial_exponents,
                                 polygon_area, polygon_centroid,
                                 polygon_diameter, polygon_quadrature,
                                 triangle_quadrature, triangulate_polygon)

LSHAPE = np.array([[0.0, 0.0], [2.0, 0.0], [2.0, 1.0], [1.0, 1.0],
                   [1.0, 2.0], [0.0, 2.0]])


def test_gauss01_exactness():
    for n in range(1, 8):
        x, w = gauss_legendre_01(n)
        assert x.min() > 0.0 and x.max() < 1.0
        for k in range(2 * n):
            assert w @ x ** k == pytest.approx(1.0 / (k + 1), rel=1e-13)


def test_edge_quadrature_polynomial_exact():
    p0, p1 = np.array([0.2, -1.0]), np.array([1.5, 0.7])
    rule = edge_quadrature(p0, p1, exactness=7)
    length = np.linalg.norm(p1 - p0)
    assert rule.weights.sum() == pytest.approx(length, rel=1e-14)
    # integrate (2x - y)^3 along the segment via 1-D antiderivative
    xs = Polynomial([p0[0], p1[0] - p0[0]])
    ys = Polynomial([p0[1], p1[1] - p0[1]])
    f = (2 * xs - ys) ** 3
    exact = (f.integ()(1.0) - f.integ()(0.0)) * length
    got = rule.weights @ (2 * rule.points[:, 0] - rule.points[:, 1]) ** 3
    assert got == pytest.approx(exact, rel=1e-13)


def test_triangle_rule_matches_moment_oracle():
    tri = np.array([[0.1, 0.2], [1.3, 0.4], [0.5, 1.7]])
    exact = oracles.polygon_monomial_integrals(tri, 6)
    rule = triangle_quadrature(tri, exactness=6)
    for (a, b), val in exact.items():
        got = rule.weights @ (rule.points[:, 0] ** a * rule.points[:, 1] ** b)
        assert got == pytest.approx(val, rel=1e-12, abs=1e-14)


@pytest.mark.parametrize("idx", range(9))
def test_polygon_quadrature_matches_moment_oracle(idx):
    poly, _ = oracles.polygon_corpus(9, seed=2)[idx]
    exact = oracles.polygon_monomial_integrals(poly, 6)
    rule = polygon_quadrature(poly, exactness=6)
    assert np.all(rule.weights > 0.0)
    scale = abs(exact[(0, 0)])
    for (a, b), val in exact.items():
        got = rule.weights @ (rule.points[:, 0] ** a * rule.points[:, 1] ** b)
        assert got == pytest.approx(val, abs=1e-12 * max(scale, 1.0),
                                    rel=1e-11)


def test_polygon_quadrature_weights_sum_to_area():
    rule = polygon_quadrature(LSHAPE, exactness=2)
    assert rule.weights.sum() == pytest.approx(3.0, rel=1e-13)


def test_geometry_known_values():
    square = np.array([[0.0, 0.0], [2.0, 0.0], [2.0, 2.0], [0.0, 2.0]])
    assert polygon_area(square) == pytest.approx(4.0)
    assert polygon_centroid(square) == pytest.approx([1.0, 1.0])
    assert polygon_diameter(square) == pytest.approx(2.0 * np.sqrt(2.0))
    assert polygon_area(LSHAPE) == pytest.approx(3.0)
    assert polygon_diameter(LSHAPE) == pytest.approx(np.hypot(2.0, 2.0))


@settings(max_examples=40, deadline=None)
@given(theta=st.floats(-np.pi, np.pi), tx=st.floats(-5.0, 5.0),
       ty=st.floats(-5.0, 5.0))
def test_geometry_rigid_motion_invariance(theta, tx, ty):
    rot = np.array([[np.cos(theta), -np.sin(theta)],
                    [np.sin(theta), np.cos(theta)]])
    moved = LSHAPE @ rot.T + np.array([tx, ty])
    assert polygon_area(moved) == pytest.approx(polygon_area(LSHAPE),
                                                rel=1e-10)
    assert polygon_diameter(moved) == pytest.approx(
        polygon_diameter(LSHAPE), rel=1e-10)


def test_triangulation_covers_reflex_polygon():
    tris = triangulate_polygon(LSHAPE)
    assert len(tris) >= len(LSHAPE) - 2
    total = sum(polygon_area(t) for t in tris)
    assert total == pytest.approx(3.0, rel=1e-12)


def test_monomial_exponents_graded_order():
    assert monomial_exponents(2) == [(0, 0), (1, 0), (0, 1),
                                     (2, 0), (1, 1), (0, 2)]


def test_scaled_basis_reproduces_monomials():
    basis = ScaledMonomialBasis(np.array([0.5, -0.25]), 2.0, 2)
    pts = np.random.default_rng(0).uniform(-1, 1, size=(20, 2))
    vals = basis.evaluate(pts)
    X = (pts[:, 0] - 0.5) / 2.0
    Y = (pts[:, 1] + 0.25) / 2.0
    expect = np.column_stack([np.ones(20), X, Y, X * X, X * Y, Y * Y])
    assert np.allclose(vals, expect, atol=1e-14)


def test_scaled_basis_derivatives_match_finite_differences():
    basis = ScaledMonomialBasis(np.array([0.3, 0.7]), 1.7, 2)
    rng = np.random.default_rng(1)
    pts = rng.uniform(-2, 2, size=(12, 2))
    eps = 1e-6
    for dx, dy in ((1, 0), (0, 1)):
        shift = eps * np.array([dx, dy])
        fd = (basis.evaluate(pts + shift) - basis.evaluate(pts - shift)) \
            / (2 * eps)
        got = basis.evaluate_derivative(pts, dx, dy)
        assert np.allclose(got, fd, atol=1e-8)
    # second derivatives of quadratics are constant; check one mixed
    dxy = basis.evaluate_derivative(pts, 1, 1)
    assert np.allclose(dxy, dxy[0], atol=1e-14)
    assert dxy[0][4] == pytest.approx(1.0 / 1.7 ** 2)


def test_scaled_basis_gradient_stacks_derivatives():
    basis = ScaledMonomialBasis(np.array([0.0, 0.0]), 1.0, 2)
    pts = np.array([[0.3, -0.4], [1.0, 2.0]])
    gx, gy = basis.gradient(pts)
    assert np.allclose(gx, basis.evaluate_derivative(pts, 1, 0))
    assert np.allclose(gy, basis.evaluate_derivative(pts, 0, 1))


def test_quadrature_rule_integrate_callable():
    rule = polygon_quadrature(LSHAPE, exactness=3)
    got = rule.integrate(lambda p: p[:, 0] + 0.0 * p[:, 1])
    exact = oracles.polygon_monomial_integrals(LSHAPE, 1)[(1, 0)]
    assert got == pytest.approx(exact, rel=1e-13)
