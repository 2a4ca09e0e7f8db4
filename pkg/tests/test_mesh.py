import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from dora.mesh import (
    MeshError,
    TriangleMesh,
    build_edge_adjacency,
    check_watertight,
    face_normal,
    face_normals,
    load_mesh,
    normalize_to_unit_cube,
    save_obj,
    save_ply,
)
from dora.shapes import bump_box, cube, icosahedron, icosphere, plane_grid

from conftest import single_triangle, two_cubes_sharing_edge


# ---------------------------------------------------------------- loading


def test_load_cube_obj(data_dir):
    m = load_mesh(data_dir / "cube.obj")
    assert m.n_vertices == 8 and m.n_faces == 12
    np.testing.assert_array_equal(m.vertices[6], [1, 1, 1])


def test_load_icosahedron_ply(data_dir):
    m = load_mesh(data_dir / "icosahedron.ply")
    assert m.n_vertices == 12 and m.n_faces == 20
    # all edges equal length 2 in this coordinate convention
    adj = build_edge_adjacency(m)
    np.testing.assert_allclose(adj.lengths, 2.0, atol=1e-6)
    assert check_watertight(m).is_watertight


def test_out_of_range_index(tmp_path):
    p = tmp_path / "bad.obj"
    p.write_text("".join(f"v {i} 0 0\n" for i in range(8)) + "f 1 2 9\n")
    with pytest.raises(MeshError, match="out of range"):
        load_mesh(p)


def test_zero_faces(tmp_path):
    p = tmp_path / "empty.obj"
    p.write_text("v 0 0 0\nv 1 0 0\nv 0 1 0\n")
    with pytest.raises(MeshError, match="zero faces"):
        load_mesh(p)


def test_parse_failure(tmp_path):
    p = tmp_path / "junk.obj"
    p.write_text("v 0 0 zero\nf 1 2 3\n")
    with pytest.raises(MeshError):
        load_mesh(p)


def test_missing_file(tmp_path):
    with pytest.raises(MeshError):
        load_mesh(tmp_path / "nope.obj")


def test_quad_fan_and_negative_indices(tmp_path):
    p = tmp_path / "quad.obj"
    p.write_text("v 0 0 0\nv 1 0 0\nv 1 1 0\nv 0 1 0\nf -4 -3 -2 -1\n")
    m = load_mesh(p)
    np.testing.assert_array_equal(m.faces, [[0, 1, 2], [0, 2, 3]])


def test_repeated_vertex_rejected():
    with pytest.raises(MeshError, match="repeats"):
        TriangleMesh([[0, 0, 0], [1, 0, 0], [0, 1, 0]], [[0, 1, 1]])


@pytest.mark.parametrize("binary", [False, True])
def test_ply_round_trip(tmp_path, binary):
    m = icosphere(1)
    p = tmp_path / "m.ply"
    save_ply(m, p, binary=binary)
    back = load_mesh(p)
    np.testing.assert_array_equal(back.faces, m.faces)
    np.testing.assert_allclose(back.vertices, m.vertices, atol=1e-6)


def test_obj_round_trip_exact(tmp_path):
    m = icosphere(2)
    p = tmp_path / "m.obj"
    save_obj(m, p)
    back = load_mesh(p)
    np.testing.assert_array_equal(back.vertices, m.vertices)
    np.testing.assert_array_equal(back.faces, m.faces)


def test_vertex_order_preserved(tmp_path):
    p = tmp_path / "t.obj"
    p.write_text("v 5 0 0\nv 0 0 0\nv 0 5 0\nf 2 1 3\n")
    m = load_mesh(p)
    np.testing.assert_array_equal(m.vertices[0], [5, 0, 0])


# ---------------------------------------------------------- normalization


def test_normalize_big_cube():
    m = TriangleMesh(cube(0.5).vertices * 10 + 5, cube(0.5).faces)
    n = normalize_to_unit_cube(m)
    np.testing.assert_array_equal(n.bounds(), [[-1, -1, -1], [1, 1, 1]])


def test_normalize_idempotent(unit_cube):
    n = normalize_to_unit_cube(unit_cube)
    np.testing.assert_array_equal(n.vertices, unit_cube.vertices)


def test_normalize_box_aspect():
    m = bump_box((2.0, 1.0, 0.5), grid=(0, 0)).mesh()
    m = TriangleMesh(m.vertices + [3.0, -7.0, 11.0], m.faces)
    n = normalize_to_unit_cube(m)
    lo, hi = n.bounds()
    np.testing.assert_allclose(hi - lo, [2.0, 1.0, 0.5], atol=1e-12)
    np.testing.assert_allclose(0.5 * (lo + hi), 0.0, atol=1e-12)


def test_normalize_degenerate():
    m = TriangleMesh([[1, 1, 1], [1, 1, 1.0], [1, 1, 1]], [[0, 1, 2]])
    with pytest.raises(MeshError):
        normalize_to_unit_cube(m)


# ---------------------------------------------------------------- normals


def test_face_normal_examples():
    m = TriangleMesh([[0, 0, 0], [1, 0, 0], [0, 1, 0], [1, 1, 1]], [[0, 1, 2], [0, 2, 1], [0, 1, 3]])
    np.testing.assert_allclose(face_normal(m, 0), [0, 0, 1])
    np.testing.assert_allclose(face_normal(m, 1), [0, 0, -1])
    np.testing.assert_allclose(face_normal(m, 2), np.array([0, -1, 1]) / math.sqrt(2), atol=1e-15)


def test_degenerate_face_flagged():
    m = TriangleMesh([[0, 0, 0], [1, 0, 0], [2, 0, 0], [0, 1, 0]], [[0, 1, 2], [0, 1, 3]])
    normals, degenerate = face_normals(m)
    assert degenerate.tolist() == [True, False]
    np.testing.assert_array_equal(normals[0], 0.0)
    with pytest.raises(MeshError, match="degenerate"):
        face_normal(m, 0)


# -------------------------------------------------------------- adjacency


def test_adjacency_single_triangle():
    adj = build_edge_adjacency(single_triangle())
    assert len(adj) == 3
    assert adj.face_counts().tolist() == [1, 1, 1]


def test_adjacency_two_triangles():
    m = TriangleMesh([[0, 0, 0], [1, 0, 0], [0, 1, 0], [1, 1, 0]], [[0, 1, 2], [1, 3, 2]])
    adj = build_edge_adjacency(m)
    assert len(adj) == 5
    assert adj.incident(2, 1) == (0, 1)


def test_adjacency_cube(unit_cube):
    adj = build_edge_adjacency(unit_cube)
    # Euler: V - E + F = 2
    assert len(adj) == 18 == unit_cube.n_vertices + unit_cube.n_faces - 2
    assert (adj.face_counts() == 2).all()
    assert (adj.edges[:, 0] < adj.edges[:, 1]).all()


def test_watertight_examples(unit_cube):
    assert check_watertight(unit_cube).is_watertight
    rep = check_watertight(single_triangle())
    assert not rep.is_watertight and rep.boundary_edges == 3
    rep = check_watertight(two_cubes_sharing_edge())
    assert rep.nonmanifold_edges > 0 and not rep.is_watertight


@pytest.mark.parametrize(
    "mesh", [cube(), icosahedron(), icosphere(2), bump_box().mesh()], ids=["cube", "ico", "sphere", "bump"]
)
def test_closed_fixtures_watertight(mesh):
    assert check_watertight(mesh).is_watertight


def test_plane_not_watertight():
    assert not check_watertight(plane_grid(4)).is_watertight


# ------------------------------------------------------------- properties

FIXTURES = [cube(), icosahedron(), icosphere(1), bump_box(grid=(2, 2)).mesh(), plane_grid(3), two_cubes_sharing_edge()]


@given(st.sampled_from(range(len(FIXTURES))))
def test_half_edge_count(i):
    m = FIXTURES[i]
    assert build_edge_adjacency(m).face_counts().sum() == 3 * m.n_faces


@settings(max_examples=50)
@given(
    st.sampled_from(range(4)),
    st.floats(0.01, 100.0),
    st.tuples(*[st.floats(-50, 50)] * 3),
)
def test_normalize_idempotent_property(i, scale, shift):
    m = FIXTURES[i]
    m = TriangleMesh(m.vertices * scale + np.array(shift), m.faces)
    once = normalize_to_unit_cube(m)
    twice = normalize_to_unit_cube(once)
    np.testing.assert_allclose(twice.vertices, once.vertices, atol=1e-12)
    assert np.abs(once.vertices).max() <= 1.0
    assert math.isclose((once.bounds()[1] - once.bounds()[0]).max(), 2.0, abs_tol=1e-12)


@settings(max_examples=50)
@given(
    st.sampled_from(range(4)),
    st.floats(0.1, 10.0),
    st.tuples(*[st.floats(-10, 10)] * 3),
)
def test_normals_similarity_invariant(i, scale, shift):
    m = FIXTURES[i]
    moved = TriangleMesh(m.vertices * scale + np.array(shift), m.faces)
    np.testing.assert_allclose(face_normals(moved)[0], face_normals(m)[0], atol=1e-12)


@given(st.sampled_from(range(4)), st.data())
def test_deleting_a_face_opens_three_edges(i, data):
    m = FIXTURES[i]
    k = data.draw(st.integers(0, m.n_faces - 1))
    keep = np.delete(m.faces, k, axis=0)
    rep = check_watertight(TriangleMesh(m.vertices, keep))
    assert rep.boundary_edges == 3 and rep.nonmanifold_edges == 0
