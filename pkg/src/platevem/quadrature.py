"""Scaled monomial bases and quadrature on polygons.

Polygon rules are assembled from a triangulation of the cell (fan from
the centroid when that is valid, ear clipping otherwise) with a conical
product Gauss rule on each triangle, so they are exact for polynomials
up to a requested total degree.
"""

import numpy as np
from numpy.polynomial.legendre import leggauss


class QuadratureRule:
    """A quadrature rule: points (n, 2) and weights (n,)."""

    def __init__(self, points, weights):
        self.points = np.asarray(points, dtype=float)
        self.weights = np.asarray(weights, dtype=float)

    def integrate(self, f):
        """Integrate a callable f(points) -> values over the rule."""
        return self.weights @ f(self.points)


def gauss_legendre_01(n):
    """Gauss-Legendre nodes/weights on [0, 1]."""
    x, w = leggauss(n)
    return 0.5 * (x + 1.0), 0.5 * w


def edge_quadrature(p0, p1, exactness):
    """Gauss rule along the segment p0 -> p1.

    Parameters
    ----------
    p0, p1 : array_like, shape (2,)
        Segment endpoints.
    exactness : int
        The rule integrates polynomials of this degree (in arc length)
        exactly.

    Returns
    -------
    QuadratureRule
        Weights carry the physical edge length.
    """
    p0 = np.asarray(p0, dtype=float)
    p1 = np.asarray(p1, dtype=float)
    n = max(1, (exactness + 2) // 2)
    s, w = gauss_legendre_01(n)
    pts = p0[None, :] + s[:, None] * (p1 - p0)[None, :]
    length = np.hypot(*(p1 - p0))
    return QuadratureRule(pts, w * length)


def triangle_quadrature(tri, exactness):
    """Conical-product Gauss rule on a triangle.

    Uses the Duffy map from the unit square; with n one-dimensional
    points per direction, n = ceil((d + 2) / 2), the rule is exact for
    bivariate polynomials of total degree d.
    """
    tri = np.asarray(tri, dtype=float)
    n = max(1, -((exactness + 2) // -2))
    u, wu = gauss_legendre_01(n)
    v, wv = gauss_legendre_01(n)
    U, V = np.meshgrid(u, v, indexing="ij")
    # reference triangle (0,0)-(1,0)-(0,1): x = u, y = v (1 - u)
    X = U.ravel()
    Y = (V * (1.0 - U)).ravel()
    W = (np.outer(wu, wv) * (1.0 - U)).ravel()
    a, b, c = tri
    jac = (b[0] - a[0]) * (c[1] - a[1]) - (c[0] - a[0]) * (b[1] - a[1])
    pts = a[None, :] + np.outer(X, b - a) + np.outer(Y, c - a)
    return QuadratureRule(pts, W * jac)


def polygon_area(vertices):
    """Signed area of a polygon (positive for CCW orientation)."""
    v = np.asarray(vertices, dtype=float)
    x, y = v[:, 0], v[:, 1]
    return 0.5 * np.sum(x * np.roll(y, -1) - np.roll(x, -1) * y)


def polygon_centroid(vertices):
    """Area centroid of a simple polygon."""
    v = np.asarray(vertices, dtype=float)
    x, y = v[:, 0], v[:, 1]
    xn, yn = np.roll(x, -1), np.roll(y, -1)
    cross = x * yn - xn * y
    area = 0.5 * np.sum(cross)
    cx = np.sum((x + xn) * cross) / (6.0 * area)
    cy = np.sum((y + yn) * cross) / (6.0 * area)
    return np.array([cx, cy])


def polygon_diameter(vertices):
    """Largest vertex-to-vertex distance."""
    v = np.asarray(vertices, dtype=float)
    d = v[:, None, :] - v[None, :, :]
    return np.sqrt((d ** 2).sum(axis=2)).max()


def _signed_area(a, b, c):
    return 0.5 * ((b[0] - a[0]) * (c[1] - a[1]) - (c[0] - a[0]) * (b[1] - a[1]))


def _point_in_triangle(p, a, b, c, eps):
    d1 = _signed_area(p, a, b)
    d2 = _signed_area(p, b, c)
    d3 = _signed_area(p, c, a)
    return d1 >= -eps and d2 >= -eps and d3 >= -eps


def triangulate_polygon(vertices):
    """Triangulate a simple CCW polygon into a list of index triples.

    Tries a fan from the area centroid first (valid for star-shaped
    cells); if any fan triangle degenerates or flips, falls back to ear
    clipping, which handles any simple polygon.

    Returns
    -------
    tris : list of (3, 2) arrays
        Triangle vertex coordinates, positively oriented.
    """
    v = np.asarray(vertices, dtype=float)
    n = len(v)
    if n == 3:
        return [v.copy()]
    c = polygon_centroid(v)
    scale = polygon_diameter(v) ** 2
    fan = [np.array([c, v[i], v[(i + 1) % n]]) for i in range(n)]
    if all(_signed_area(*t) > 1e-12 * scale for t in fan):
        return fan
    return _ear_clip(v)


def _ear_clip(v):
    """Ear-clipping triangulation of a simple CCW polygon."""
    idx = list(range(len(v)))
    tris = []
    scale = polygon_diameter(v) ** 2
    eps = 1e-12 * scale
    guard = 0
    while len(idx) > 3:
        guard += 1
        if guard > 10 * len(v):
            raise ValueError("ear clipping failed; polygon may be degenerate")
        n = len(idx)
        for j in range(n):
            i0, i1, i2 = idx[j - 1], idx[j], idx[(j + 1) % n]
            a, b, c = v[i0], v[i1], v[i2]
            if _signed_area(a, b, c) <= eps:
                continue
            others = [i for i in idx if i not in (i0, i1, i2)]
            if any(_point_in_triangle(v[i], a, b, c, -eps) for i in others):
                continue
            tris.append(np.array([a, b, c]))
            idx.pop(j)
            break
        else:
            raise ValueError("no ear found; polygon is not simple")
    tris.append(np.array([v[idx[0]], v[idx[1]], v[idx[2]]]))
    return tris


def polygon_quadrature(vertices, exactness):
    """Quadrature over a simple polygon, exact for total degree `exactness`.

    Parameters
    ----------
    vertices : array_like, shape (n, 2)
        CCW vertex coordinates.
    exactness : int
        Polynomial degree integrated exactly.
    """
    tris = triangulate_polygon(vertices)
    rules = [triangle_quadrature(t, exactness) for t in tris]
    pts = np.vstack([r.points for r in rules])
    wts = np.concatenate([r.weights for r in rules])
    return QuadratureRule(pts, wts)


def monomial_exponents(degree):
    """Graded-lex exponent pairs for bivariate monomials up to `degree`.

    Order for degree 2: (0,0), (1,0), (0,1), (2,0), (1,1), (0,2).
    """
    return [(t - j, j) for t in range(degree + 1) for j in range(t + 1)]


def _falling(a, d):
    out = 1.0
    for i in range(d):
        out *= a - i
    return out


class ScaledMonomialBasis:
    """Monomials ((x - x_E) / h_E)^alpha on a cell.

    Parameters
    ----------
    centroid : array_like, shape (2,)
        Cell centroid x_E.
    diameter : float
        Cell diameter h_E.
    degree : int
        Maximal total degree.
    """

    def __init__(self, centroid, diameter, degree):
        self.centroid = np.asarray(centroid, dtype=float)
        self.diameter = float(diameter)
        self.degree = int(degree)
        self.exponents = monomial_exponents(degree)
        self.n_terms = len(self.exponents)

    @classmethod
    def for_polygon(cls, vertices, degree):
        return cls(polygon_centroid(vertices), polygon_diameter(vertices), degree)

    def _local(self, points):
        p = np.atleast_2d(np.asarray(points, dtype=float))
        return (p - self.centroid) / self.diameter

    def evaluate(self, points):
        """Values of all basis monomials: array (n_points, n_terms)."""
        return self.evaluate_derivative(points, 0, 0)

    def evaluate_derivative(self, points, dx, dy):
        """Partial derivative d^dx/dx^dx d^dy/dy^dy of every monomial.

        Supports any derivative order; orders up to 3 are exercised by
        the element kernels.
        """
        loc = self._local(points)
        xi, eta = loc[:, 0], loc[:, 1]
        out = np.empty((len(loc), self.n_terms))
        scale = self.diameter ** (dx + dy)
        for col, (a, b) in enumerate(self.exponents):
            coef = _falling(a, dx) * _falling(b, dy)
            if coef == 0.0:
                out[:, col] = 0.0
            else:
                out[:, col] = coef * xi ** (a - dx) * eta ** (b - dy) / scale
        return out

    def gradient(self, points):
        """Pair of arrays (d/dx, d/dy), each (n_points, n_terms)."""
        return (self.evaluate_derivative(points, 1, 0),
                self.evaluate_derivative(points, 0, 1))
