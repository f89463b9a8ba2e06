"""C1 virtual element method for a nonlinear nonlocal plate equation.

The package discretizes the dynamic deflection of a thin rectangular
plate whose restoring force couples bending with a nonlocal membrane
term, using conforming H2 virtual elements of degree 2 on general
polygonal meshes.
"""

from .mesh import (PolygonalMesh, generate_square_grid, generate_voronoi,
                   read_mesh, write_mesh)
from .quadrature import ScaledMonomialBasis, polygon_quadrature, edge_quadrature
from .element import DofLayout, build_projectors, build_local_matrices
from .assembly import DofMap, GlobalSystem, assemble, interpolate
from .dynamics import (NewtonConfig, PhysicalParams, Trajectory,
                       compute_energy, run_simulation, solve_stationary)
from .experiments import (ManufacturedSolution, error_h2, error_rel,
                          run_example1, run_example2, report_jacobian)

__all__ = [
    "PolygonalMesh",
    "generate_square_grid",
    "generate_voronoi",
    "read_mesh",
    "write_mesh",
    "ScaledMonomialBasis",
    "polygon_quadrature",
    "edge_quadrature",
    "DofLayout",
    "build_projectors",
    "build_local_matrices",
    "DofMap",
    "GlobalSystem",
    "assemble",
    "interpolate",
    "NewtonConfig",
    "PhysicalParams",
    "Trajectory",
    "compute_energy",
    "run_simulation",
    "solve_stationary",
    "ManufacturedSolution",
    "error_h2",
    "error_rel",
    "run_example1",
    "run_example2",
    "report_jacobian",
]

__version__ = "0.1.0"
