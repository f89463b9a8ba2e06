"""Global DoF numbering, essential boundary conditions, sparse assembly.

Every vertex carries three DoFs (value and the two scaled gradient
slots).  Essential conditions are imposed by symmetric elimination of
the fixed slots, so the assembled matrices act on free DoFs only and
the mass matrix stays positive definite.
"""

import numpy as np
import scipy.sparse as sp

from . import mesh as meshmod
from .element import CellKernel, build_local_load, build_local_matrices

CLAMPED = "clamped"
BRIDGE_MIXED = "bridge_mixed"
FREE = "free"  # no essential constraints; patch tests and debugging


class DofMap:
    """Vertex-slot numbering with constraint flags.

    Global slot id of vertex v, slot s (0 value, 1 d/dx, 2 d/dy) is
    3v + s.  Clamped fixes all three slots at boundary vertices; the
    bridge problem fixes value and d/dy on the hinged vertical ends
    (u = 0 along x = const forces the tangential derivative) and
    leaves the free edges untouched.
    """

    def __init__(self, mesh, problem_kind):
        if problem_kind not in (CLAMPED, BRIDGE_MIXED, FREE):
            raise ValueError(f"unknown problem kind {problem_kind!r}")
        self.problem_kind = problem_kind
        self.n_total = 3 * mesh.n_vertices
        fixed = np.zeros(self.n_total, dtype=bool)
        for v, tag in enumerate(mesh.vertex_tags):
            if tag == meshmod.INTERIOR or problem_kind == FREE:
                continue
            if problem_kind == CLAMPED:
                if tag != meshmod.CLAMPED:
                    raise ValueError(
                        f"clamped problem on a mesh with {tag!r} boundary")
                fixed[3 * v:3 * v + 3] = True
            else:
                if tag == meshmod.CLAMPED:
                    raise ValueError("bridge problem on a clamped mesh")
                if tag == meshmod.SIMPLY_SUPPORTED:
                    fixed[3 * v] = True
                    fixed[3 * v + 2] = True
        self.fixed = fixed
        self.free = ~fixed
        self.index = np.full(self.n_total, -1, dtype=int)
        self.index[self.free] = np.arange(self.free.sum())
        self.n_free = int(self.free.sum())

    def cell_slots(self, mesh, ci):
        """Global slot ids of cell ci, ordered like the local DoFs."""
        ids = mesh.cells[ci]
        out = np.empty(3 * len(ids), dtype=int)
        out[0::3] = 3 * ids
        out[1::3] = 3 * ids + 1
        out[2::3] = 3 * ids + 2
        return out


class GlobalSystem:
    """Assembled free-DoF matrices plus the per-cell kernel cache."""

    def __init__(self, mesh, dof_map, sigma, delta, M, M_delta, A, Ax, locals_):
        self.mesh = mesh
        self.dof_map = dof_map
        self.sigma = sigma
        self.delta = delta
        self.M = M
        self.M_delta = M_delta
        self.A = A
        self.Ax = Ax
        self.locals = locals_

    @property
    def n_free(self):
        return self.dof_map.n_free

    def expand(self, eta):
        """Free-DoF vector -> full slot vector (fixed slots zero)."""
        full = np.zeros(self.dof_map.n_total)
        full[self.dof_map.free] = eta
        return full

    def restrict(self, full):
        return full[self.dof_map.free]

    def assemble_load(self, g, t):
        return assemble_load(self, g, t)

    def interpolate(self, u, grad_u):
        return interpolate(self, u, grad_u)

    def load_operator(self):
        """Sparse map from load samples at all quadrature points to the
        free-DoF load vector; built once, reused every time step."""
        if not hasattr(self, "_load_op"):
            rows, cols, vals = [], [], []
            pts = []
            offset = 0
            for ci, lm in enumerate(self.locals):
                k = lm.kernel
                nq = len(k.rule.weights)
                B = lm.projectors.P_l2.T @ (
                    k.basis.evaluate(k.rule.points).T * k.rule.weights)
                slots = self.dof_map.index[self.dof_map.cell_slots(self.mesh, ci)]
                keep = slots >= 0
                rows.append(np.repeat(slots[keep], nq))
                cols.append(np.tile(np.arange(offset, offset + nq),
                                    keep.sum()))
                vals.append(B[keep].ravel())
                pts.append(k.rule.points)
                offset += nq
            op = sp.coo_matrix(
                (np.concatenate(vals),
                 (np.concatenate(rows), np.concatenate(cols))),
                shape=(self.dof_map.n_free, offset)).tocsr()
            self._load_op = (op, np.vstack(pts))
        return self._load_op


def _delta_value(delta, point):
    if callable(delta):
        return float(delta(point[0], point[1]))
    return float(delta)


def assemble(mesh, dof_map, sigma, delta=1.0, quad_exactness=None):
    """Assemble mass, damped mass, stiffness, and axial matrices.

    Parameters
    ----------
    mesh : PolygonalMesh
    dof_map : DofMap
    sigma : float
        Poisson ratio, in (0, 1).
    delta : float or callable (x, y) -> float
        Damping weight; sampled at cell centroids for the damped mass.
    """
    if not 0.0 < sigma < 1.0:
        raise ValueError("sigma must lie in (0, 1)")
    rows, cols = [], []
    vals_m, vals_md, vals_a, vals_ax = [], [], [], []
    locals_ = []
    for ci in range(mesh.n_cells):
        try:
            if quad_exactness is None:
                cell = CellKernel.from_mesh(mesh, ci)
            else:
                cell = CellKernel.from_mesh(mesh, ci, quad_exactness)
            lm = build_local_matrices(cell, sigma)
        except Exception as exc:
            raise RuntimeError(f"element kernel failed on cell {ci}") from exc
        locals_.append(lm)
        slots = dof_map.index[dof_map.cell_slots(mesh, ci)]
        keep = slots >= 0
        idx = np.where(keep)[0]
        gi = slots[keep]
        r = np.repeat(gi, len(gi))
        c = np.tile(gi, len(gi))
        rows.append(r)
        cols.append(c)
        sub = np.ix_(idx, idx)
        d_e = _delta_value(delta, mesh.cell_centroid[ci])
        vals_m.append(lm.M[sub].ravel())
        vals_md.append(d_e * lm.M[sub].ravel())
        vals_a.append(lm.K[sub].ravel())
        vals_ax.append(lm.Ax[sub].ravel())

    n = dof_map.n_free
    rows = np.concatenate(rows) if rows else np.zeros(0, dtype=int)
    cols = np.concatenate(cols) if cols else np.zeros(0, dtype=int)

    def build(vals):
        vals = np.concatenate(vals) if vals else np.zeros(0)
        mat = sp.coo_matrix((vals, (rows, cols)), shape=(n, n)).tocsr()
        mat.sum_duplicates()
        mat.eliminate_zeros()
        return mat

    return GlobalSystem(mesh, dof_map, sigma, delta,
                        build(vals_m), build(vals_md), build(vals_a),
                        build(vals_ax), locals_)


def assemble_load(system, g, t):
    """Free-DoF load vector of g(x, y, t) at time t."""
    if g is None:
        return np.zeros(system.dof_map.n_free)
    op, pts = system.load_operator()
    gv = np.asarray(g(pts[:, 0], pts[:, 1], t), dtype=float)
    gv = np.broadcast_to(gv, (len(pts),))
    if not np.all(np.isfinite(gv)):
        bad = pts[~np.isfinite(gv)][0]
        raise ValueError(f"load is not finite at {tuple(bad)}")
    return op @ gv


def interpolate(system, u, grad_u):
    """DoF interpolant of a smooth function: free-DoF vector.

    Applies the DoF functionals (vertex values, scaled gradients) and
    checks that fixed slots are compatible with the homogeneous
    essential conditions before dropping them.
    """
    mesh = system.mesh
    x, y = mesh.vertices[:, 0], mesh.vertices[:, 1]
    vals = np.broadcast_to(np.asarray(u(x, y), dtype=float), x.shape)
    gx, gy = grad_u(x, y)
    gx = np.broadcast_to(np.asarray(gx, dtype=float), x.shape)
    gy = np.broadcast_to(np.asarray(gy, dtype=float), x.shape)
    h = mesh.vertex_patch_diameter
    full = np.empty(system.dof_map.n_total)
    full[0::3] = vals
    full[1::3] = h * gx
    full[2::3] = h * gy
    fixed_vals = full[system.dof_map.fixed]
    scale = max(1.0, np.abs(full).max())
    if fixed_vals.size and np.abs(fixed_vals).max() > 1e-8 * scale:
        raise ValueError("function violates the essential boundary conditions")
    return system.restrict(full)


def export_matrix(matrix, path):
    """Write a sparse matrix as 'row col value' lines (row-major)."""
    coo = sp.coo_matrix(matrix)
    order = np.lexsort((coo.col, coo.row))
    with open(path, "w") as fh:
        for i in order:
            fh.write(f"{coo.row[i]} {coo.col[i]} {coo.data[i]:.17g}\n")
