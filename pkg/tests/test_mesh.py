import numpy as np
import pytest
from hypothesis import given, strategies as st

from oracles import brute_boundary_faces, ray_triangle
from receval import shapes
from receval.errors import ContractError, DegenerateGeometryError
from receval.mesh import (PointCloud, TriangleMesh, compute_vertex_normals,
                          detect_boundary_triangles, roi_sphere_center, surface_centroid)
from receval.transform import RigidTransform, quat_from_rotvec


def test_face_index_validation():
    with pytest.raises(ContractError):
        TriangleMesh(np.zeros((3, 3)), [[0, 1, 3]])
    with pytest.raises(ContractError):
        TriangleMesh(np.zeros((3, 3)), [[0, 1, 1]])


def test_normals_must_be_unit():
    with pytest.raises(ContractError):
        TriangleMesh(np.eye(3), [[0, 1, 2]], vertex_normals=np.full((3, 3), 0.5))
    with pytest.raises(ContractError):
        PointCloud(np.zeros((2, 3)), np.array([[0, 0, 2.0], [0, 0, 1.0]]))


def test_arrays_are_read_only():
    m = shapes.tetrahedron()
    with pytest.raises(ValueError):
        m.vertices[0, 0] = 5


def test_square_normals_follow_winding():
    V = np.array([[0.0, 0, 0], [1, 0, 0], [1, 1, 0], [0, 1, 0]])
    n, ok = compute_vertex_normals(TriangleMesh(V, [[0, 1, 2], [0, 2, 3]]))
    assert ok.all()
    np.testing.assert_allclose(n, np.tile([0, 0, 1.0], (4, 1)))
    n, _ = compute_vertex_normals(TriangleMesh(V, [[0, 2, 1], [0, 3, 2]]))
    np.testing.assert_allclose(n, np.tile([0, 0, -1.0], (4, 1)))


def test_tetrahedron_normals_by_hand():
    m = shapes.tetrahedron()
    V, F = m.vertices, m.faces
    fn = []
    for a, b, c in F:
        n = np.cross(V[b] - V[a], V[c] - V[a])
        fn.append(n / np.linalg.norm(n))  # regular: equal areas, so unit sums suffice
    fn = np.array(fn)
    n, _ = compute_vertex_normals(m)
    for v in range(4):
        s = fn[[i for i in range(4) if v in F[i]]].sum(axis=0)
        np.testing.assert_allclose(n[v], s / np.linalg.norm(s), atol=1e-12)


def test_icosphere_normals_close_to_radial():
    m = shapes.icosphere(3, analytic_normals=False)
    n, _ = compute_vertex_normals(m)
    radial = m.vertices / np.linalg.norm(m.vertices, axis=1, keepdims=True)
    ang = np.degrees(np.arccos(np.clip((n * radial).sum(1), -1, 1)))
    assert ang.max() < 2.0


def test_isolated_vertex_flagged():
    V = np.array([[0.0, 0, 0], [1, 0, 0], [0, 1, 0], [5, 5, 5]])
    n, ok = compute_vertex_normals(TriangleMesh(V, [[0, 1, 2]]))
    assert ok.tolist() == [True, True, True, False]
    assert np.all(n[3] == 0)


def test_degenerate_face_contributes_nothing():
    V = np.array([[0.0, 0, 0], [1, 0, 0], [0, 1, 0], [2, 0, 0]])
    n1, _ = compute_vertex_normals(TriangleMesh(V, [[0, 1, 2]]))
    n2, ok = compute_vertex_normals(TriangleMesh(V, [[0, 1, 2], [0, 1, 3]]))
    np.testing.assert_allclose(n1[:3], n2[:3])
    assert not ok[3]


@given(st.integers(0, 10_000))
def test_normals_rigid_equivariance(seed):
    rng = np.random.default_rng(seed)
    m = shapes.torus(nu=12, nv=8)
    T = RigidTransform(quat_from_rotvec(rng.normal(size=3)), rng.normal(size=3) * 100)
    n0, _ = compute_vertex_normals(m)
    n1, _ = compute_vertex_normals(TriangleMesh(T.apply(m.vertices), m.faces))
    np.testing.assert_allclose(n1, T.apply_vectors(n0), atol=1e-9)


@pytest.mark.parametrize("mesh", [shapes.tetrahedron(), shapes.icosphere(2), shapes.box(n=3),
                                  shapes.torus(), shapes.torso_phantom(40, 20)])
def test_watertight_has_no_boundary(mesh):
    assert detect_boundary_triangles(mesh) == set()


def test_boundary_examples():
    assert detect_boundary_triangles(TriangleMesh(np.eye(3), [[0, 1, 2]])) == {0}
    g = shapes.planar_grid(3, 3)
    assert g.n_faces == 8
    assert detect_boundary_triangles(g) == brute_boundary_faces(g.faces)
    h = shapes.hemisphere()
    assert detect_boundary_triangles(h) == brute_boundary_faces(h.faces)
    assert len(detect_boundary_triangles(h)) > 0


def test_roi_center_examples():
    np.testing.assert_allclose(roi_sphere_center(shapes.uv_sphere()), [0, 0, -1], atol=1e-12)
    sq = shapes.planar_grid(3, 3, spacing=1.0, z=0.9)
    np.testing.assert_allclose(roi_sphere_center(sq), [1, 1, 0.9], atol=1e-12)


def test_roi_center_matches_ray_cast(phantom):
    c = surface_centroid(phantom)
    best = np.inf
    d = np.array([0, 0, 1.0])
    o = np.array([c[0], c[1], -1e4])
    for a, b, cc in zip(*phantom.triangles()):
        best = min(best, ray_triangle(o, d, a, b, cc))
    np.testing.assert_allclose(roi_sphere_center(phantom), [c[0], c[1], o[2] + best], atol=1e-9)


def test_roi_center_miss():
    ring = shapes.torus(R=3, r=1)
    with pytest.raises(DegenerateGeometryError):
        roi_sphere_center(ring)


def test_centroid_is_area_weighted():
    # dense tessellation on one half must not pull the centroid
    coarse = shapes.planar_grid(2, 2, spacing=1.0)
    fine = shapes.planar_grid(11, 11, spacing=0.1)
    np.testing.assert_allclose(surface_centroid(coarse), surface_centroid(fine), atol=1e-12)
