"""Polygonal meshes of a rectangular plate with boundary classification.

Cells are simple CCW polygons; edges carry one of the tags
``clamped`` / ``simply_supported`` / ``free`` on the boundary and
``interior`` elsewhere.  Generators cover square, distorted, Lloyd-
smoothed Voronoi, non-convex (chevron) and hexagon-dominant tilings of
a rectangle.  The JSON layout used by :func:`write_mesh` /
:func:`read_mesh` is documented in the README.
"""

import json
import warnings

import numpy as np

from .quadrature import polygon_area, polygon_centroid, polygon_diameter

INTERIOR = "interior"
CLAMPED = "clamped"
SIMPLY_SUPPORTED = "simply_supported"
FREE = "free"

BOUNDARY_TAGS = (CLAMPED, SIMPLY_SUPPORTED, FREE)

# priority for vertex tagging where differently-tagged edges meet:
# the stronger (more-constrained) condition wins at corners
_TAG_RANK = {INTERIOR: 0, FREE: 1, SIMPLY_SUPPORTED: 2, CLAMPED: 3}


def clamped_tagger(_midpoint):
    """Tag every boundary edge as clamped."""
    return CLAMPED


def bridge_tagger(bounds, tol=None):
    """Tagger for the bridge problem: short vertical ends are hinged.

    Edges with midpoint on x = xmin or x = xmax are tagged
    simply-supported, the long horizontal edges free.
    """
    xmin, ymin, xmax, ymax = bounds
    if tol is None:
        tol = 1e-9 * max(xmax - xmin, ymax - ymin)

    def tag(midpoint):
        if abs(midpoint[0] - xmin) < tol or abs(midpoint[0] - xmax) < tol:
            return SIMPLY_SUPPORTED
        return FREE

    return tag


class PolygonalMesh:
    """Immutable polygonal mesh of a rectangle.

    Parameters
    ----------
    vertices : array, shape (N, 2)
    cells : sequence of vertex-index sequences
        Each cell a simple polygon; clockwise cells are reoriented
        with a warning.
    bounds : (xmin, ymin, xmax, ymax)
    tagger : callable, optional
        Maps a boundary-edge midpoint to a tag string.  Default: all
        boundary edges clamped.
    boundary_tags : dict, optional
        Explicit {(v0, v1): tag} with v0 < v1; overrides `tagger`.
    """

    def __init__(self, vertices, cells, bounds, tagger=None, boundary_tags=None):
        self.vertices = np.asarray(vertices, dtype=float)
        if self.vertices.ndim != 2 or self.vertices.shape[1] != 2:
            raise ValueError("vertices must be an (N, 2) array")
        if not np.all(np.isfinite(self.vertices)):
            raise ValueError("non-finite vertex coordinates")
        self.bounds = tuple(float(b) for b in bounds)
        xmin, ymin, xmax, ymax = self.bounds
        if xmax <= xmin or ymax <= ymin:
            raise ValueError("degenerate domain bounds")

        self.cells = []
        for ci, cell in enumerate(cells):
            ids = np.asarray(cell, dtype=int)
            if len(ids) < 3:
                raise ValueError(f"cell {ci} has fewer than 3 vertices")
            if ids.min() < 0 or ids.max() >= len(self.vertices):
                raise ValueError(f"cell {ci} references an unknown vertex id")
            if len(set(ids.tolist())) != len(ids):
                raise ValueError(f"cell {ci} repeats a vertex")
            if polygon_area(self.vertices[ids]) < 0:
                warnings.warn(f"cell {ci} is clockwise; reorienting", stacklevel=2)
                ids = ids[::-1]
            self.cells.append(ids)

        self._build_geometry()
        self._build_edges(tagger, boundary_tags)

    # -- construction helpers -------------------------------------------

    def _build_geometry(self):
        n_cells = len(self.cells)
        self.cell_area = np.empty(n_cells)
        self.cell_centroid = np.empty((n_cells, 2))
        self.cell_diameter = np.empty(n_cells)
        for i, ids in enumerate(self.cells):
            poly = self.vertices[ids]
            area = polygon_area(poly)
            if area <= 0 or not np.isfinite(area):
                raise ValueError(f"cell {i} has non-positive area")
            self.cell_area[i] = area
            self.cell_centroid[i] = polygon_centroid(poly)
            self.cell_diameter[i] = polygon_diameter(poly)

        # h_Xi: average diameter of the cells meeting at each vertex
        counts = np.zeros(len(self.vertices))
        accum = np.zeros(len(self.vertices))
        for i, ids in enumerate(self.cells):
            counts[ids] += 1
            accum[ids] += self.cell_diameter[i]
        used = counts > 0
        if not used.all():
            raise ValueError("mesh contains vertices not referenced by any cell")
        self.vertex_patch_diameter = accum / counts

    def _build_edges(self, tagger, boundary_tags):
        edge_index = {}
        edges = []
        edge_cells = []
        for ci, ids in enumerate(self.cells):
            for a, b in zip(ids, np.roll(ids, -1)):
                key = (min(a, b), max(a, b))
                j = edge_index.get(key)
                if j is None:
                    edge_index[key] = len(edges)
                    edges.append(key)
                    edge_cells.append([ci])
                else:
                    edge_cells[j].append(ci)
        self.edges = np.array(edges, dtype=int)
        self.edge_cells = edge_cells
        for j, owners in enumerate(edge_cells):
            if len(owners) > 2:
                raise ValueError(f"edge {tuple(self.edges[j])} shared by >2 cells")

        if tagger is None:
            tagger = clamped_tagger
        tags = []
        for j, (a, b) in enumerate(self.edges):
            if len(edge_cells[j]) == 2:
                tags.append(INTERIOR)
                continue
            if boundary_tags is not None:
                key = (min(a, b), max(a, b))
                if key not in boundary_tags:
                    raise ValueError(f"boundary edge {key} carries no tag")
                tag = boundary_tags[key]
            else:
                tag = tagger(0.5 * (self.vertices[a] + self.vertices[b]))
            if tag not in BOUNDARY_TAGS:
                raise ValueError(f"unknown boundary tag {tag!r}")
            tags.append(tag)
        self.edge_tags = tags

        # strongest incident edge tag per vertex (corner rule)
        vtag = [INTERIOR] * len(self.vertices)
        for (a, b), tag in zip(self.edges, tags):
            for v in (a, b):
                if _TAG_RANK[tag] > _TAG_RANK[vtag[v]]:
                    vtag[v] = tag
        self.vertex_tags = vtag

    # -- queries ---------------------------------------------------------

    @property
    def n_vertices(self):
        return len(self.vertices)

    @property
    def n_cells(self):
        return len(self.cells)

    @property
    def h(self):
        """Mesh size: largest cell diameter."""
        return self.cell_diameter.max()

    def cell_polygon(self, i):
        """Vertex coordinates of cell i, CCW, shape (n, 2)."""
        return self.vertices[self.cells[i]]

    def boundary_edges(self):
        """Iterate (v0, v1, tag) over boundary edges."""
        for (a, b), tag, owners in zip(self.edges, self.edge_tags, self.edge_cells):
            if len(owners) == 1:
                yield a, b, tag

    def validate(self):
        """Check tiling and adjacency invariants; raise on violation."""
        xmin, ymin, xmax, ymax = self.bounds
        domain_area = (xmax - xmin) * (ymax - ymin)
        total = self.cell_area.sum()
        if abs(total - domain_area) > 1e-10 * domain_area:
            raise ValueError(
                f"cells do not tile the domain: area {total} vs {domain_area}")
        for j, owners in enumerate(self.edge_cells):
            if len(owners) == 1 and self.edge_tags[j] == INTERIOR:
                raise ValueError(f"boundary edge {tuple(self.edges[j])} untagged")
            if len(owners) == 2 and self.edge_tags[j] != INTERIOR:
                raise ValueError(f"interior edge {tuple(self.edges[j])} tagged")
        return self


# -- generators -----------------------------------------------------------


def _grid_points(n, bounds):
    xmin, ymin, xmax, ymax = bounds
    x = np.linspace(xmin, xmax, n + 1)
    y = np.linspace(ymin, ymax, n + 1)
    X, Y = np.meshgrid(x, y, indexing="ij")
    return np.column_stack([X.ravel(), Y.ravel()])


def _grid_cells(n):
    def vid(i, j):
        return i * (n + 1) + j

    cells = []
    for i in range(n):
        for j in range(n):
            cells.append([vid(i, j), vid(i + 1, j), vid(i + 1, j + 1), vid(i, j + 1)])
    return cells


def generate_square_grid(n, bounds=(0.0, 0.0, 1.0, 1.0), tagger=None):
    """Uniform n x n quadrilateral grid on a rectangle."""
    if n < 1:
        raise ValueError("n must be >= 1")
    return PolygonalMesh(_grid_points(n, bounds), _grid_cells(n), bounds, tagger)


def generate_distorted_grid(n, bounds=(0.0, 0.0, 1.0, 1.0), amplitude=0.2,
                            seed=0, tagger=None):
    """Square grid with interior vertices perturbed deterministically.

    Each interior vertex moves by at most `amplitude` times the cell
    size in each coordinate; boundary vertices stay put.
    """
    if not 0.0 <= amplitude < 0.5:
        raise ValueError("amplitude must lie in [0, 0.5)")
    if n < 1:
        raise ValueError("n must be >= 1")
    xmin, ymin, xmax, ymax = bounds
    pts = _grid_points(n, bounds)
    rng = np.random.default_rng(seed)
    shift = rng.uniform(-1.0, 1.0, size=pts.shape)
    shift[:, 0] *= amplitude * (xmax - xmin) / n
    shift[:, 1] *= amplitude * (ymax - ymin) / n
    interior = (
        (np.abs(pts[:, 0] - xmin) > 1e-14) & (np.abs(pts[:, 0] - xmax) > 1e-14)
        & (np.abs(pts[:, 1] - ymin) > 1e-14) & (np.abs(pts[:, 1] - ymax) > 1e-14))
    pts = pts + shift * interior[:, None]
    mesh = PolygonalMesh(pts, _grid_cells(n), bounds, tagger)
    if mesh.cell_area.min() <= 0:
        raise RuntimeError("distortion produced a degenerate cell; change the seed")
    return mesh


def _dedupe_polygons(polys, scale):
    """Merge near-identical vertices across polygons; return (points, cells)."""
    decimals = max(0, int(round(-np.log10(1e-9 * scale))))
    index = {}
    points = []
    cells = []
    for poly in polys:
        ids = []
        for p in poly:
            key = (round(p[0], decimals), round(p[1], decimals))
            j = index.get(key)
            if j is None:
                j = len(points)
                index[key] = j
                points.append(p)
            if not ids or (ids[-1] != j and ids[0] != j):
                ids.append(j)
            elif ids[-1] != j:
                ids.append(j)
        # drop closing duplicate if present
        if len(ids) > 1 and ids[0] == ids[-1]:
            ids.pop()
        if len(ids) >= 3:
            cells.append(ids)
    return np.array(points), cells


def generate_voronoi(n_seeds, bounds=(0.0, 0.0, 1.0, 1.0), lloyd_iterations=0,
                     seed=0, tagger=None):
    """Voronoi tessellation clipped to the rectangle, Lloyd-smoothed.

    Clipping is exact: seeds are mirrored across all four sides so the
    cells of the original seeds tile the rectangle.
    """
    from scipy.spatial import Voronoi

    if n_seeds < 1:
        raise ValueError("n_seeds must be >= 1")
    xmin, ymin, xmax, ymax = bounds
    if n_seeds == 1:
        poly = [[xmin, ymin], [xmax, ymin], [xmax, ymax], [xmin, ymax]]
        return PolygonalMesh(np.array(poly), [[0, 1, 2, 3]], bounds, tagger)

    rng = np.random.default_rng(seed)
    sites = np.column_stack([
        rng.uniform(xmin, xmax, n_seeds), rng.uniform(ymin, ymax, n_seeds)])

    for attempt in range(8):
        try:
            for _ in range(lloyd_iterations):
                polys = _voronoi_cells(sites, bounds)
                sites = np.array([polygon_centroid(p) for p in polys])
            polys = _voronoi_cells(sites, bounds)
            break
        except Exception:
            if attempt == 7:
                raise RuntimeError("Voronoi generation failed after retries")
            jitter = 1e-6 * max(xmax - xmin, ymax - ymin)
            sites = sites + rng.uniform(-jitter, jitter, sites.shape)
    scale = max(xmax - xmin, ymax - ymin)
    points, cells = _dedupe_polygons(polys, scale)
    return PolygonalMesh(points, cells, bounds, tagger)


def _voronoi_cells(sites, bounds):
    """Bounded Voronoi cells of `sites` inside a rectangle, via mirroring."""
    from scipy.spatial import Voronoi

    xmin, ymin, xmax, ymax = bounds
    mirrors = [
        np.column_stack([2 * xmin - sites[:, 0], sites[:, 1]]),
        np.column_stack([2 * xmax - sites[:, 0], sites[:, 1]]),
        np.column_stack([sites[:, 0], 2 * ymin - sites[:, 1]]),
        np.column_stack([sites[:, 0], 2 * ymax - sites[:, 1]]),
    ]
    vor = Voronoi(np.vstack([sites] + mirrors))
    polys = []
    for i in range(len(sites)):
        region = vor.regions[vor.point_region[i]]
        if -1 in region or len(region) < 3:
            raise ValueError("unbounded Voronoi region for an interior site")
        poly = vor.vertices[region]
        if polygon_area(poly) < 0:
            poly = poly[::-1]
        polys.append(poly)
    return polys


def generate_nonconvex_grid(n, bounds=(0.0, 0.0, 1.0, 1.0), tagger=None):
    """Chevron tiling: each grid square split into two hexagons.

    The splitting polyline runs (1/2,0) -> (1/4,1/3) -> (3/4,2/3) ->
    (1/2,1) in cell coordinates, giving every hexagon exactly one
    reflex vertex.
    """
    if n < 1:
        raise ValueError("n must be >= 1")
    xmin, ymin, xmax, ymax = bounds
    hx, hy = (xmax - xmin) / n, (ymax - ymin) / n
    left = [(0, 0), (0.5, 0), (0.25, 1 / 3), (0.75, 2 / 3), (0.5, 1), (0, 1)]
    right = [(0.5, 0), (1, 0), (1, 1), (0.5, 1), (0.75, 2 / 3), (0.25, 1 / 3)]
    polys = []
    for i in range(n):
        for j in range(n):
            ox, oy = xmin + i * hx, ymin + j * hy
            for frac in (left, right):
                polys.append(np.array([[ox + f[0] * hx, oy + f[1] * hy]
                                       for f in frac]))
    points, cells = _dedupe_polygons(polys, max(xmax - xmin, ymax - ymin))
    return PolygonalMesh(points, cells, bounds, tagger)


def _clip_polygon(poly, bounds):
    """Sutherland-Hodgman clip of a convex polygon to a rectangle."""
    xmin, ymin, xmax, ymax = bounds
    half_planes = [  # inside test and line parameter per rectangle side
        (lambda p: p[0] >= xmin, 0, xmin),
        (lambda p: p[0] <= xmax, 0, xmax),
        (lambda p: p[1] >= ymin, 1, ymin),
        (lambda p: p[1] <= ymax, 1, ymax),
    ]
    out = [np.asarray(p, dtype=float) for p in poly]
    for inside, axis, level in half_planes:
        if not out:
            return []
        cur, out = out, []
        for k in range(len(cur)):
            p, q = cur[k], cur[(k + 1) % len(cur)]
            pin, qin = inside(p), inside(q)
            if pin:
                out.append(p)
            if pin != qin:
                t = (level - p[axis]) / (q[axis] - p[axis])
                out.append(p + t * (q - p))
    return out


def generate_regular_polygon_grid(n, bounds=(0.0, 0.0, 1.0, 1.0), tagger=None):
    """Hexagon-dominant tiling: a honeycomb clipped to the rectangle."""
    if n < 1:
        raise ValueError("n must be >= 1")
    xmin, ymin, xmax, ymax = bounds
    R = (xmax - xmin) / (1.5 * n)  # circumradius; about n columns
    angles = np.arange(6) * np.pi / 3.0
    hexagon = np.column_stack([np.cos(angles), np.sin(angles)]) * R
    dy = np.sqrt(3.0) * R
    polys = []
    cols = int(np.ceil((xmax - xmin) / (1.5 * R))) + 2
    rows = int(np.ceil((ymax - ymin) / dy)) + 2
    for c in range(-1, cols):
        cx = xmin + 1.5 * R * c
        for r in range(-1, rows):
            cy = ymin + dy * (r + 0.5 * (c % 2))
            clipped = _clip_polygon(hexagon + [cx, cy], bounds)
            if len(clipped) >= 3:
                poly = np.array(clipped)
                if polygon_area(poly) > 1e-12 * R * R:
                    polys.append(poly)
    points, cells = _dedupe_polygons(polys, max(xmax - xmin, ymax - ymin))
    return PolygonalMesh(points, cells, bounds, tagger)


# -- regularity -----------------------------------------------------------


class RegularityReport:
    """Shape-regularity summary: worst edge ratio and kernel-ball ratio."""

    def __init__(self, min_edge_ratio, min_star_radius_ratio, gamma):
        self.min_edge_ratio = min_edge_ratio
        self.min_star_radius_ratio = min_star_radius_ratio
        self.gamma = gamma

    @property
    def passes(self):
        return (self.min_edge_ratio >= self.gamma
                and self.min_star_radius_ratio >= self.gamma)

    def __repr__(self):
        return (f"RegularityReport(edge={self.min_edge_ratio:.4g}, "
                f"star={self.min_star_radius_ratio:.4g}, "
                f"gamma={self.gamma}, passes={self.passes})")


def kernel_inradius(poly):
    """Radius of the largest ball inside the kernel of a simple polygon.

    The kernel is the intersection of the inner half-planes of the
    edges; its Chebyshev center solves a small linear program.
    Returns 0 for polygons that are not star-shaped.
    """
    from scipy.optimize import linprog

    poly = np.asarray(poly, dtype=float)
    n = len(poly)
    A = np.zeros((n, 3))
    b = np.zeros(n)
    for i in range(n):
        p, q = poly[i], poly[(i + 1) % n]
        t = q - p
        nrm = np.hypot(*t)
        # outward normal of a CCW edge
        nvec = np.array([t[1], -t[0]]) / nrm
        A[i, :2] = nvec
        A[i, 2] = 1.0
        b[i] = nvec @ p
    span = poly.max(axis=0) - poly.min(axis=0)
    res = linprog(c=[0.0, 0.0, -1.0], A_ub=A, b_ub=b,
                  bounds=[(poly[:, 0].min(), poly[:, 0].max()),
                          (poly[:, 1].min(), poly[:, 1].max()),
                          (0.0, span.max())],
                  method="highs")
    if not res.success or res.x[2] <= 0:
        return 0.0
    return res.x[2]


def check_regularity(mesh, gamma):
    """Evaluate shape-regularity ratios of every cell against gamma."""
    min_edge = np.inf
    min_star = np.inf
    for i in range(mesh.n_cells):
        poly = mesh.cell_polygon(i)
        hE = mesh.cell_diameter[i]
        lengths = np.hypot(*(np.roll(poly, -1, axis=0) - poly).T)
        min_edge = min(min_edge, lengths.min() / hE)
        min_star = min(min_star, kernel_inradius(poly) / hE)
    return RegularityReport(min_edge, min_star, gamma)


# -- serialization --------------------------------------------------------


def write_mesh(mesh, path):
    """Write a mesh to the documented JSON format."""
    boundary = [{"edge": [int(a), int(b)], "tag": tag}
                for a, b, tag in mesh.boundary_edges()]
    doc = {
        "vertices": mesh.vertices.tolist(),
        "cells": [ids.tolist() for ids in mesh.cells],
        "boundary": boundary,
        "bounds": list(mesh.bounds),
    }
    with open(path, "w") as fh:
        json.dump(doc, fh)
        fh.write("\n")


def read_mesh(path):
    """Read and validate a mesh from the documented JSON format."""
    with open(path) as fh:
        try:
            doc = json.load(fh)
        except json.JSONDecodeError as exc:
            raise ValueError(f"cannot parse {path!s} as mesh JSON: {exc}")
    for key in ("vertices", "cells", "boundary", "bounds"):
        if key not in doc:
            raise ValueError(f"mesh file missing {key!r}")
    tags = {}
    for rec in doc["boundary"]:
        try:
            a, b = rec["edge"]
            tags[(min(a, b), max(a, b))] = rec["tag"]
        except (KeyError, TypeError, ValueError) as exc:
            raise ValueError(f"malformed boundary record {rec!r}") from exc
    mesh = PolygonalMesh(doc["vertices"], doc["cells"], doc["bounds"],
                         boundary_tags=tags)
    return mesh.validate()


def write_vtk(mesh, path):
    """Export the mesh as legacy ASCII VTK polydata (for visualizers)."""
    lines = ["# vtk DataFile Version 3.0", "polygonal mesh", "ASCII",
             "DATASET POLYDATA", f"POINTS {mesh.n_vertices} double"]
    for x, y in mesh.vertices:
        lines.append(f"{x:.17g} {y:.17g} 0.0")
    total = sum(len(ids) + 1 for ids in mesh.cells)
    lines.append(f"POLYGONS {mesh.n_cells} {total}")
    for ids in mesh.cells:
        lines.append(" ".join([str(len(ids))] + [str(int(v)) for v in ids]))
    with open(path, "w") as fh:
        fh.write("\n".join(lines) + "\n")
