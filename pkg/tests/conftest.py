import pytest

from platevem.assembly import DofMap, assemble
from platevem.mesh import generate_square_grid


@pytest.fixture(scope="session")
def clamped_3x3():
    """Smallest clamped system with interior DoFs (12 free)."""
    mesh = generate_square_grid(3)
    return assemble(mesh, DofMap(mesh, "clamped"), sigma=0.3)


@pytest.fixture(scope="session")
def clamped_4x4():
    mesh = generate_square_grid(4)
    return assemble(mesh, DofMap(mesh, "clamped"), sigma=0.3)
