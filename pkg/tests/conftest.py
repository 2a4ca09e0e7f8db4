from pathlib import Path

import numpy as np
import pytest

from dora.mesh import TriangleMesh
from dora.shapes import cube, icosahedron

DATA = Path(__file__).parent / "data"


@pytest.fixture
def data_dir() -> Path:
    return DATA


@pytest.fixture
def unit_cube() -> TriangleMesh:
    return cube(1.0)


@pytest.fixture
def ico() -> TriangleMesh:
    return icosahedron()


def two_cubes_sharing_edge() -> TriangleMesh:
    """Cubes [0,1]^3 and [1,2]x[1,2]x[0,1] welded along the edge x=y=1."""
    a = cube(0.5)
    va = a.vertices + 0.5
    vb = a.vertices + np.array([1.5, 1.5, 0.5])
    verts = np.concatenate([va, vb])
    faces = np.concatenate([a.faces, a.faces + len(va)])
    # weld coincident vertices
    _, inverse = np.unique(np.round(verts, 9), axis=0, return_inverse=True)
    uniq = np.zeros((inverse.max() + 1, 3))
    uniq[inverse.reshape(-1)] = verts
    return TriangleMesh(uniq, inverse.reshape(-1)[faces])


def single_triangle() -> TriangleMesh:
    return TriangleMesh([[0, 0, 0], [1, 0, 0], [0, 1, 0]], [[0, 1, 2]])


def zigzag_sheet(nx: int, ny: int) -> TriangleMesh:
    """Open sheet folded by 90 degrees along every interior x grid line: (nx - 1) * ny sharp edges."""
    xs = np.linspace(-0.9, 0.9, nx + 1)
    ys = np.linspace(-0.9, 0.9, ny + 1)
    gx, gy = np.meshgrid(xs, ys, indexing="ij")
    # rise equal to the run gives 45 degree slopes on alternating columns
    gz = (np.arange(nx + 1) % 2)[:, None] * np.full_like(gx, xs[1] - xs[0])
    verts = np.column_stack([gx.ravel(), gy.ravel(), gz.ravel()])
    idx = np.arange((nx + 1) * (ny + 1)).reshape(nx + 1, ny + 1)
    a, b = idx[:-1, :-1].ravel(), idx[1:, :-1].ravel()
    c, d = idx[1:, 1:].ravel(), idx[:-1, 1:].ravel()
    faces = np.concatenate([np.column_stack([a, b, c]), np.column_stack([a, c, d])])
    return TriangleMesh(verts, faces)
