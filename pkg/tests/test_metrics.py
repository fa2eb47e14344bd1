import json

import numpy as np
import pytest
from hypothesis import given, strategies as st

from oracles import brute_boundary_faces, brute_closest_face
from receval import shapes
from receval.bvh import build_bvh
from receval.errors import ContractError
from receval.mesh import PointCloud, TriangleMesh
from receval.meshio import load_mesh
from receval.metrics import (BOUNDARY, INCLUDED, NO_NORMAL, OUTSIDE_ROI, RoiSphere, aggregate,
                             evaluate_surface, export_colormap, surface_distance)
from receval.transform import RigidTransform, quat_from_rotvec


def _everything(mesh, cloud=None):
    return RoiSphere.everything(mesh.vertices, *(() if cloud is None else (cloud.points,)))


def test_aggregate_examples():
    s = aggregate([2, 2, 2])
    assert (s.mean, s.std, s.n) == (2.0, 0.0, 3)
    s = aggregate([1, 2, 3, 4], [INCLUDED, BOUNDARY, OUTSIDE_ROI, INCLUDED])
    assert s.mean == 2.5 and s.n == 2
    e = aggregate([1.0], [OUTSIDE_ROI])
    assert e.empty and e.to_dict()["mean"] is None


def test_aggregate_two_pass_reference():
    v = np.random.default_rng(0).gamma(2.0, 3.0, 1000)
    s = aggregate(v)
    mean = sum(v) / len(v)
    var = sum((x - mean) ** 2 for x in v) / len(v)
    assert s.mean == pytest.approx(mean, rel=1e-12)
    assert s.std == pytest.approx(np.sqrt(var), rel=1e-12)
    assert s.rms == pytest.approx(np.sqrt(np.mean(v ** 2)), rel=1e-12)
    assert s.median == np.median(v) and s.max == v.max()


def test_self_distance_is_zero(phantom):
    rep = evaluate_surface(phantom.to_point_cloud(), phantom, _everything(phantom))
    assert np.all(rep.status == INCLUDED)
    assert rep.distance.max() == 0.0
    assert rep.angle.max() < 1e-6


def test_scaled_sphere_offset():
    fine = shapes.icosphere(4)
    samples = shapes.sample_surface(shapes.icosphere(6), 2000, seed=1)
    src = PointCloud(samples.points / np.linalg.norm(samples.points, axis=1, keepdims=True) * 1.1)
    rep = surface_distance(src, fine, _everything(fine, src))
    assert abs(rep.distance_summary.mean - 0.1) < 1e-3


def test_flipped_normals_give_180(phantom):
    pc = phantom.to_point_cloud()
    flipped = PointCloud(pc.points, -pc.normals)
    rep = evaluate_surface(flipped, phantom, _everything(phantom))
    np.testing.assert_allclose(rep.angle, 180.0, atol=1e-6)


def test_coarse_vs_fine_icosphere_against_oracle():
    coarse = shapes.icosphere(2, analytic_normals=False)
    fine = shapes.icosphere(4)
    src = coarse.with_normals().to_point_cloud()
    rep = evaluate_surface(src, fine, _everything(fine, src))
    # coarse vertex normals deviate from radial by less than the dihedral angle
    a, b, c = coarse.triangles()
    fn = np.cross(b - a, c - a)
    fn /= np.linalg.norm(fn, axis=1, keepdims=True)
    max_dihedral = 0.0
    for i in range(0, coarse.n_faces, 7):
        max_dihedral = max(max_dihedral, np.degrees(np.arccos(np.clip(fn @ fn[i], -1, 1))[
            np.any(np.isin(coarse.faces, coarse.faces[i]), axis=1)].max()))
    assert rep.angle_summary.mean < max_dihedral
    # per-point recomputation with a brute-force closest face and explicit interpolation
    for i in range(0, len(src), 37):
        f, _ = brute_closest_face(src.points[i], fine.vertices, fine.faces)
        tri = fine.vertices[fine.faces[f]]
        T = np.column_stack([tri[1] - tri[0], tri[2] - tri[0]])
        st_, *_ = np.linalg.lstsq(T, src.points[i] - tri[0], rcond=None)
        w = np.clip([1 - st_.sum(), st_[0], st_[1]], 0, None)
        n = (w / w.sum()) @ fine.vertex_normals[fine.faces[f]]
        n /= np.linalg.norm(n)
        ang = np.degrees(np.arccos(np.clip(src.normals[i] @ n, -1, 1)))
        assert abs(ang - rep.angle[i]) < 1e-4


def test_boundary_exclusion_on_hemisphere():
    hemi = shapes.hemisphere(16, 64)
    full = shapes.uv_sphere(32, 64)
    rng = np.random.default_rng(2)
    P = rng.normal(size=(3000, 3))
    P = P / np.linalg.norm(P, axis=1, keepdims=True) * rng.uniform(0.9, 1.1, (3000, 1))
    roi = RoiSphere(np.zeros(3), 5.0)
    rim = brute_boundary_faces(hemi.faces)
    rep = surface_distance(PointCloud(P), hemi, roi)
    for i in range(0, 3000, 29):
        f, _ = brute_closest_face(P[i], hemi.vertices, hemi.faces)
        assert (rep.status[i] == BOUNDARY) == (f in rim)
    assert surface_distance(PointCloud(P), full, roi).counts()["boundary-excluded"] == 0


def test_status_priority_and_counts():
    m = shapes.hemisphere()
    P = np.array([[0, 0, -0.5], [0.1, 0, -0.8], [50, 0, 0], [0.0333, -1.0167, -0.0333]])
    N = np.array([[0, 0, -1.0], [0, 0, 0], [0, 0, 1], [0, 0, -1]])
    rep = evaluate_surface(PointCloud(P, N), m, RoiSphere(np.zeros(3), 2.0))
    assert rep.status[0] == INCLUDED
    assert rep.status[1] == NO_NORMAL and not np.isnan(rep.distance[1])
    assert rep.status[2] == OUTSIDE_ROI
    assert rep.status[3] == BOUNDARY
    assert sum(rep.counts().values()) == 4
    # no-normal points still count toward the distance summary
    assert rep.distance_summary.n == 2 and rep.angle_summary.n == 1


def test_empty_inputs():
    m = shapes.tetrahedron().with_normals()
    with pytest.raises(ContractError):
        surface_distance(PointCloud(np.zeros((0, 3))), m)
    with pytest.raises(ContractError):
        surface_distance(PointCloud(np.zeros((1, 3))), TriangleMesh(np.zeros((0, 3)), np.zeros((0, 3), int)))


def test_face_permutation_invariance():
    m = shapes.torus()
    perm = np.random.default_rng(0).permutation(m.n_faces)
    m2 = TriangleMesh(m.vertices, m.faces[perm], m.vertex_normals)
    P = PointCloud(np.random.default_rng(1).normal(size=(300, 3)) * 3)
    roi = RoiSphere(np.zeros(3), 20)
    d1 = surface_distance(P, m, roi).distance
    d2 = surface_distance(P, m2, roi).distance
    np.testing.assert_allclose(d1, d2, atol=1e-12)


@given(st.integers(0, 10_000))
def test_rigid_invariance(seed):
    rng = np.random.default_rng(seed)
    m = shapes.torus(nu=24, nv=12)
    src = shapes.sample_surface(m, 200, seed) .transformed(
        RigidTransform(quat_from_rotvec(rng.normal(size=3) * 0.05), rng.normal(size=3) * 0.05))
    T = RigidTransform(quat_from_rotvec(rng.normal(size=3)), rng.normal(size=3) * 100)
    roi = RoiSphere(np.zeros(3), 3.5)
    r1 = evaluate_surface(src, m, roi)
    r2 = evaluate_surface(src.transformed(T), m.transformed(T), RoiSphere(T.apply(roi.center), 3.5))
    np.testing.assert_array_equal(r1.status, r2.status)
    np.testing.assert_allclose(r1.distance, r2.distance, atol=1e-9, equal_nan=True)
    np.testing.assert_allclose(r1.angle, r2.angle, atol=1e-6, equal_nan=True)


@given(st.floats(0.1, 3.0), st.floats(0.1, 3.0))
def test_roi_monotone(r1, r2):
    m = shapes.icosphere(2)
    P = PointCloud(np.random.default_rng(5).normal(size=(200, 3)))
    small, big = sorted((r1, r2))
    inc_s = surface_distance(P, m, RoiSphere([0.2, 0, 0], small)).status == INCLUDED
    inc_b = surface_distance(P, m, RoiSphere([0.2, 0, 0], big)).status == INCLUDED
    assert np.all(inc_b[inc_s])


def test_angles_in_range():
    m = shapes.icosphere(2)
    rng = np.random.default_rng(3)
    N = rng.normal(size=(500, 3))
    N /= np.linalg.norm(N, axis=1, keepdims=True)
    rep = evaluate_surface(PointCloud(rng.normal(size=(500, 3)), N), m, RoiSphere(np.zeros(3), 10))
    a = rep.angle[rep.status == INCLUDED]
    assert np.all((a >= 0) & (a <= 180)) and not np.any(np.isnan(a))


def test_colormap_export_round_trip():
    m = shapes.hemisphere()
    P = np.array([[0, 0, -0.9], [50, 0, 0], [0.0, -1.0, -0.05], [0, 0.5, -0.7]])
    cloud = PointCloud(P, np.tile([0, 0, -1.0], (4, 1)))
    rep = evaluate_surface(cloud, m, RoiSphere(np.zeros(3), 2.0))
    data, side = export_colormap(rep, cloud, "distance", "ply-ascii")
    back = load_mesh(data)
    q = back.scalars["quality"]
    excluded = rep.distance_status() != INCLUDED
    assert np.all(q[excluded] == -1.0)
    np.testing.assert_array_equal(q[~excluded], rep.distance[~excluded])
    assert side["sentinel"] == -1.0 and json.dumps(side)
    zero = evaluate_surface(m.to_point_cloud(), m, _everything(m))
    data, _ = export_colormap(zero, m, "distance")
    qz = load_mesh(data).scalars["quality"]
    assert np.all((qz == 0) | (qz == -1))
    with pytest.raises(ContractError):
        export_colormap(rep, m)


def test_csv_rows(phantom, phantom_bvh):
    pc = shapes.sample_surface(phantom, 50, 0)
    rep = evaluate_surface(pc, phantom, bvh=phantom_bvh)
    lines = rep.to_csv().splitlines()
    assert lines[0] == "index,distance_mm,angle_deg,status" and len(lines) == 51
