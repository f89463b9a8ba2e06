"""Degree-2 C1 virtual element kernel on a single polygon.

Everything an element contributes is computable from its degrees of
freedom: vertex values and h_Xi-scaled vertex gradients.  The energy
projector onto quadratics needs only boundary integrals (after two
integrations by parts the volume term vanishes for degree 2), and the
edge traces are a Hermite cubic (values + tangential derivatives) and
a linear normal derivative.
"""

import numpy as np

from .quadrature import (
    ScaledMonomialBasis,
    gauss_legendre_01,
    polygon_area,
    polygon_centroid,
    polygon_diameter,
    polygon_quadrature,
)

N_POLY = 6  # dim of quadratics in 2D

# default quadrature exactness 2k+2: handles products of two projected
# quadratics and leaves headroom for smooth loads
QUAD_EXACTNESS = 6


class DofLayout:
    """Per-cell DoF bookkeeping: slots [value, h*d/dx, h*d/dy] per vertex."""

    def __init__(self, n_vertices, patch_diameters, degree=2):
        if degree != 2:
            raise NotImplementedError("only the degree-2 element is implemented")
        self.degree = degree
        self.n_vertices = n_vertices
        self.patch_diameters = np.asarray(patch_diameters, dtype=float)
        if len(self.patch_diameters) != n_vertices:
            raise ValueError("one patch diameter per vertex required")

    @property
    def n_dofs(self):
        return 3 * self.n_vertices

    def value_slot(self, i):
        return 3 * i

    def grad_slots(self, i):
        return 3 * i + 1, 3 * i + 2


class CellKernel:
    """Geometry, monomial basis, and quadrature bundle for one cell."""

    def __init__(self, polygon, patch_diameters, quad_exactness=QUAD_EXACTNESS):
        self.polygon = np.asarray(polygon, dtype=float)
        self.layout = DofLayout(len(self.polygon), patch_diameters)
        self.area = polygon_area(self.polygon)
        if self.area <= 0:
            raise ValueError("cell must be a CCW simple polygon")
        self.centroid = polygon_centroid(self.polygon)
        self.diameter = polygon_diameter(self.polygon)
        self.basis = ScaledMonomialBasis(self.centroid, self.diameter, 2)
        self.rule = polygon_quadrature(self.polygon, quad_exactness)

        d = np.roll(self.polygon, -1, axis=0) - self.polygon
        self.edge_length = np.hypot(d[:, 0], d[:, 1])
        self.tangent = d / self.edge_length[:, None]
        # outward normal of a CCW polygon: tangent rotated by -90 degrees
        self.normal = np.column_stack([self.tangent[:, 1], -self.tangent[:, 0]])

        phi = self.basis.evaluate(self.rule.points)
        self.mass_gram = phi.T @ (self.rule.weights[:, None] * phi)
        # constant second derivatives of the six monomials
        c = self.centroid[None, :]
        self.d2xx = self.basis.evaluate_derivative(c, 2, 0)[0]
        self.d2xy = self.basis.evaluate_derivative(c, 1, 1)[0]
        self.d2yy = self.basis.evaluate_derivative(c, 0, 2)[0]

    @classmethod
    def from_mesh(cls, mesh, i, quad_exactness=QUAD_EXACTNESS):
        return cls(mesh.cell_polygon(i),
                   mesh.vertex_patch_diameter[mesh.cells[i]], quad_exactness)

    @property
    def n_dofs(self):
        return self.layout.n_dofs


class ProjectorSet:
    """Element projector matrices in the scaled monomial basis."""

    def __init__(self, P_delta, P_l2, P_dx, dof_of_poly):
        self.P_delta = P_delta
        self.P_l2 = P_l2
        self.P_dx = P_dx
        self.dof_of_poly = dof_of_poly


class LocalMatrices:
    """Consistency+stabilization matrices of one element."""

    def __init__(self, K, M, Ax, kernel, projectors):
        self.K = K
        self.M = M
        self.Ax = Ax
        self.kernel = kernel
        self.projectors = projectors


def dof_of_poly(cell):
    """DoFs of every basis monomial: matrix (n_dofs, 6)."""
    V = cell.polygon
    h = cell.layout.patch_diameters
    D = np.empty((cell.n_dofs, N_POLY))
    D[0::3] = cell.basis.evaluate(V)
    D[1::3] = h[:, None] * cell.basis.evaluate_derivative(V, 1, 0)
    D[2::3] = h[:, None] * cell.basis.evaluate_derivative(V, 0, 1)
    return D


def energy_gram(cell, sigma):
    """Gram matrix of the plate energy form on the monomial basis.

    Second derivatives of quadratics are constant, so each entry is
    the (constant) integrand times the cell area.
    """
    xx, xy, yy = cell.d2xx, cell.d2xy, cell.d2yy
    lap = xx + yy
    G = (np.outer(lap, lap)
         - (1.0 - sigma) * (np.outer(xx, yy) + np.outer(yy, xx)
                            - 2.0 * np.outer(xy, xy)))
    return cell.area * G


def _boundary_functionals(cell):
    """Integrals of second derivatives of each DoF basis function.

    Returns rows (Qlap, Qxx, Qyy, Qxy), each of length n_dofs, with
    Qab[j] = integral over E of d2(phi_j)/da db, evaluated purely from
    the edge traces: int_E v_ab = oint v_a n_b ds, where grad v on an
    edge splits into the tangential derivative of the cubic value
    trace (only its endpoint values survive integration) and the
    linear normal-derivative trace (trapezoid-exact).
    """
    n = cell.n_dofs
    nv = cell.layout.n_vertices
    h = cell.layout.patch_diameters
    Qlap = np.zeros(n)
    Qxx = np.zeros(n)
    Qyy = np.zeros(n)
    Qxy = np.zeros(n)
    for i in range(nv):
        j = (i + 1) % nv
        L = cell.edge_length[i]
        tx, ty = cell.tangent[i]
        nx, ny = cell.normal[i]
        Ix = np.zeros(n)
        Iy = np.zeros(n)
        # int_e v_t along the edge telescopes to the endpoint values
        Ix[3 * j] += tx
        Ix[3 * i] -= tx
        Iy[3 * j] += ty
        Iy[3 * i] -= ty
        # linear normal derivative: mean of the endpoint normal slopes
        for k in (i, j):
            cx = L * nx / (2.0 * h[k])
            cy = L * ny / (2.0 * h[k])
            Ix[3 * k + 1] += nx * cx
            Ix[3 * k + 2] += ny * cx
            Iy[3 * k + 1] += nx * cy
            Iy[3 * k + 2] += ny * cy
        Qlap += nx * Ix + ny * Iy
        Qxx += nx * Ix
        Qyy += ny * Iy
        Qxy += 0.5 * (ny * Ix + nx * Iy)
    return Qlap, Qxx, Qyy, Qxy


def build_pidelta(cell, sigma):
    """Energy projector onto quadratics: matrix (6, n_dofs).

    Solves A^E(Pi v, m_b) = A^E(v, m_b) for all six monomials, with
    three vertex-average constraint rows pinning the {1, x, y} kernel
    (mean value and mean gradient of the projection match those of v).
    """
    BA = energy_gram(cell, sigma)
    Qlap, Qxx, Qyy, Qxy = _boundary_functionals(cell)
    xx, xy, yy = cell.d2xx, cell.d2xy, cell.d2yy
    lap = xx + yy
    R = (np.outer(lap, Qlap)
         - (1.0 - sigma) * (np.outer(yy, Qxx) + np.outer(xx, Qyy)
                            - 2.0 * np.outer(xy, Qxy)))

    nv = cell.layout.n_vertices
    h = cell.layout.patch_diameters
    V = cell.polygon
    C = np.vstack([
        cell.basis.evaluate(V).mean(axis=0),
        cell.basis.evaluate_derivative(V, 1, 0).mean(axis=0),
        cell.basis.evaluate_derivative(V, 0, 1).mean(axis=0),
    ])
    r = np.zeros((3, cell.n_dofs))
    r[0, 0::3] = 1.0 / nv
    r[1, 1::3] = 1.0 / (nv * h)
    r[2, 2::3] = 1.0 / (nv * h)

    kkt = np.zeros((N_POLY + 3, N_POLY + 3))
    kkt[:N_POLY, :N_POLY] = BA
    kkt[:N_POLY, N_POLY:] = C.T
    kkt[N_POLY:, :N_POLY] = C
    rhs = np.vstack([R, r])
    try:
        sol = np.linalg.solve(kkt, rhs)
    except np.linalg.LinAlgError as exc:
        raise RuntimeError(f"singular projector system on cell at "
                           f"{cell.centroid}") from exc
    return sol[:N_POLY]


def _edge_trace_rows(cell, i, s_nodes):
    """Value trace of every DoF basis function along edge i.

    Returns a (len(s_nodes), n_dofs) matrix: the Hermite cubic built
    from endpoint values and tangential derivatives, sampled at
    arclength fractions `s_nodes` of the edge.
    """
    nv = cell.layout.n_vertices
    j = (i + 1) % nv
    L = cell.edge_length[i]
    tx, ty = cell.tangent[i]
    h = cell.layout.patch_diameters
    tau = np.asarray(s_nodes)
    h00 = 1.0 - 3.0 * tau ** 2 + 2.0 * tau ** 3
    h01 = 3.0 * tau ** 2 - 2.0 * tau ** 3
    h10 = L * tau * (1.0 - tau) ** 2
    h11 = L * tau ** 2 * (tau - 1.0)
    T = np.zeros((len(tau), cell.n_dofs))
    T[:, 3 * i] = h00
    T[:, 3 * j] = h01
    T[:, 3 * i + 1] = h10 * tx / h[i]
    T[:, 3 * i + 2] = h10 * ty / h[i]
    T[:, 3 * j + 1] = h11 * tx / h[j]
    T[:, 3 * j + 2] = h11 * ty / h[j]
    return T


def build_l2_projectors(cell, P_delta):
    """L2 projector (6, n_dofs) and x-derivative projector (3, n_dofs).

    The enhanced space makes moments of a virtual function against
    quadratics equal those of its energy projection, so the L2
    projector is the Gram re-solve of P_delta.  The derivative
    projector integrates by parts: the volume moment falls back on
    the enhanced moments, the boundary term on the cubic edge traces.
    """
    H = cell.mass_gram
    P_l2 = np.linalg.solve(H, H @ P_delta)

    B1 = H[:3, :3]
    R = np.zeros((3, cell.n_dofs))
    # boundary term: cubic trace times linear monomial, degree 4 exact
    s, w = gauss_legendre_01(3)
    nv = cell.layout.n_vertices
    for i in range(nv):
        T = _edge_trace_rows(cell, i, s)
        p0 = cell.polygon[i]
        p1 = cell.polygon[(i + 1) % nv]
        pts = p0[None, :] + s[:, None] * (p1 - p0)[None, :]
        q = cell.basis.evaluate(pts)[:, :3]
        nx = cell.normal[i, 0]
        L = cell.edge_length[i]
        R += nx * q.T @ ((L * w)[:, None] * T)
    # volume term: only D_x m_(1,0) = 1/h survives; the moment of the
    # virtual function equals the moment of its energy projection
    moments = cell.rule.weights @ cell.basis.evaluate(cell.rule.points)
    R[1] -= (moments @ P_delta) / cell.diameter
    return P_l2, np.linalg.solve(B1, R)


def build_local_stiffness(cell, P_delta, sigma):
    """Plate-energy element matrix: consistency plus dofi-dofi term."""
    BA = energy_gram(cell, sigma)
    Kc = P_delta.T @ BA @ P_delta
    D = dof_of_poly(cell)
    I = np.eye(cell.n_dofs)
    S = I - D @ P_delta
    tau = np.trace(Kc) / cell.n_dofs
    K = Kc + tau * S.T @ S
    return 0.5 * (K + K.T)


def build_local_mass(cell, P_l2):
    """Mass element matrix: L2 consistency plus area-scaled dofi-dofi."""
    H = cell.mass_gram
    Mc = P_l2.T @ H @ P_l2
    D = dof_of_poly(cell)
    S = np.eye(cell.n_dofs) - D @ P_l2
    M = Mc + cell.area * S.T @ S
    return 0.5 * (M + M.T)


def build_local_ax(cell, P_dx):
    """Axial element matrix from the projected x-derivative alone."""
    B1 = cell.mass_gram[:3, :3]
    Ax = P_dx.T @ B1 @ P_dx
    return 0.5 * (Ax + Ax.T)


def build_local_load(cell, P_l2, g, t):
    """Load vector: quadrature of g against the projected basis."""
    pts = cell.rule.points
    gv = np.asarray(g(pts[:, 0], pts[:, 1], t), dtype=float)
    gv = np.broadcast_to(gv, (len(pts),))
    if not np.all(np.isfinite(gv)):
        bad = pts[~np.isfinite(gv)][0]
        raise ValueError(f"load is not finite at {tuple(bad)}")
    phi = cell.basis.evaluate(pts)
    return P_l2.T @ (phi.T @ (cell.rule.weights * gv))


def build_projectors(cell, sigma):
    """All projector matrices of one cell as a ProjectorSet."""
    P_delta = build_pidelta(cell, sigma)
    P_l2, P_dx = build_l2_projectors(cell, P_delta)
    return ProjectorSet(P_delta, P_l2, P_dx, dof_of_poly(cell))


def build_local_matrices(cell, sigma):
    """Stiffness, mass, and axial matrices of one cell."""
    proj = build_projectors(cell, sigma)
    K = build_local_stiffness(cell, proj.P_delta, sigma)
    M = build_local_mass(cell, proj.P_l2)
    Ax = build_local_ax(cell, proj.P_dx)
    return LocalMatrices(K, M, Ax, cell, proj)
