"""Triangle mesh and oriented point cloud containers, plus topology helpers."""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .errors import ContractError, DegenerateGeometryError
from .geometry import zray_intersections

UNIT_TOL = 1e-6


def _frozen(a, dtype):
    a = np.ascontiguousarray(a, dtype=dtype)
    a.setflags(write=False)
    return a


def _check_normals(normals, n, what):
    if normals.shape != (n, 3):
        raise ContractError(f"{what}: expected ({n}, 3) normals, got {normals.shape}")
    lens = np.linalg.norm(normals, axis=1)
    bad = (np.abs(lens - 1.0) > UNIT_TOL) & (lens != 0.0)
    if np.any(bad):
        raise ContractError(f"{what}: {int(bad.sum())} normals are neither unit nor zero")


@dataclass(frozen=True, eq=False)
class TriangleMesh:
    """Indexed triangle surface. Coordinates are millimetres.

    Vertices without incident faces carry a zero normal; all other stored
    normals are unit length.
    """

    vertices: np.ndarray
    faces: np.ndarray
    vertex_normals: Optional[np.ndarray] = None
    vertex_colors: Optional[np.ndarray] = None
    scalars: dict = field(default_factory=dict)

    def __post_init__(self):
        v = _frozen(np.reshape(self.vertices, (-1, 3)), np.float64)
        f = _frozen(np.reshape(self.faces, (-1, 3)), np.int64)
        object.__setattr__(self, "vertices", v)
        object.__setattr__(self, "faces", f)
        if f.size:
            if f.min() < 0 or f.max() >= len(v):
                raise ContractError("face index out of range")
            if np.any((f[:, 0] == f[:, 1]) | (f[:, 1] == f[:, 2]) | (f[:, 0] == f[:, 2])):
                raise ContractError("faces must reference 3 distinct vertices")
        if self.vertex_normals is not None:
            vn = _frozen(self.vertex_normals, np.float64)
            _check_normals(vn, len(v), "TriangleMesh")
            object.__setattr__(self, "vertex_normals", vn)
        if self.vertex_colors is not None:
            vc = _frozen(self.vertex_colors, np.uint8)
            if vc.shape != (len(v), 3):
                raise ContractError("vertex_colors must be (N, 3)")
            object.__setattr__(self, "vertex_colors", vc)
        for k, s in self.scalars.items():
            if len(s) != len(v):
                raise ContractError(f"scalar {k!r} has {len(s)} values for {len(v)} vertices")

    @property
    def n_vertices(self) -> int:
        return len(self.vertices)

    @property
    def n_faces(self) -> int:
        return len(self.faces)

    def triangles(self):
        """Per-face corner coordinates as three (M, 3) arrays."""
        v, f = self.vertices, self.faces
        return (np.ascontiguousarray(v[f[:, 0]]), np.ascontiguousarray(v[f[:, 1]]),
                np.ascontiguousarray(v[f[:, 2]]))

    def face_normals(self):
        """Unnormalised face normals (length = twice the face area)."""
        a, b, c = self.triangles()
        return np.cross(b - a, c - a)

    def face_areas(self):
        return 0.5 * np.linalg.norm(self.face_normals(), axis=1)

    def with_normals(self) -> "TriangleMesh":
        if self.vertex_normals is not None:
            return self
        normals, _ = compute_vertex_normals(self)
        return self.replace(vertex_normals=normals)

    def replace(self, **kw) -> "TriangleMesh":
        d = dict(vertices=self.vertices, faces=self.faces, vertex_normals=self.vertex_normals,
                 vertex_colors=self.vertex_colors, scalars=dict(self.scalars))
        d.update(kw)
        return TriangleMesh(**d)

    def transformed(self, T) -> "TriangleMesh":
        n = None if self.vertex_normals is None else T.apply_vectors(self.vertex_normals)
        if n is not None:
            n = _renormalise(n)
        return self.replace(vertices=T.apply(self.vertices), vertex_normals=n)

    def to_point_cloud(self) -> "PointCloud":
        return PointCloud(self.vertices, self.vertex_normals)


@dataclass(frozen=True, eq=False)
class PointCloud:
    """Oriented point set. ``valid`` marks points whose normal is usable."""

    points: np.ndarray
    normals: Optional[np.ndarray] = None
    valid: Optional[np.ndarray] = None
    scalars: dict = field(default_factory=dict)

    def __post_init__(self):
        p = _frozen(np.reshape(self.points, (-1, 3)), np.float64)
        object.__setattr__(self, "points", p)
        if self.normals is not None:
            n = _frozen(self.normals, np.float64)
            _check_normals(n, len(p), "PointCloud")
            object.__setattr__(self, "normals", n)
            if self.valid is None:
                object.__setattr__(self, "valid", _frozen(np.linalg.norm(n, axis=1) > 0, bool))
        if self.valid is not None:
            valid = _frozen(self.valid, bool)
            if valid.shape != (len(p),):
                raise ContractError("valid flags must be one per point")
            object.__setattr__(self, "valid", valid)
        for k, s in self.scalars.items():
            if len(s) != len(p):
                raise ContractError(f"scalar {k!r} has {len(s)} values for {len(p)} points")

    def __len__(self):
        return len(self.points)

    @property
    def has_normals(self) -> bool:
        return self.normals is not None

    def normal_ok(self) -> np.ndarray:
        if self.normals is None:
            return np.zeros(len(self.points), bool)
        return self.valid & (np.linalg.norm(self.normals, axis=1) > 0)

    def transformed(self, T) -> "PointCloud":
        n = None if self.normals is None else _renormalise(T.apply_vectors(self.normals))
        return PointCloud(T.apply(self.points), n, self.valid)

    def subset(self, idx) -> "PointCloud":
        return PointCloud(self.points[idx],
                          None if self.normals is None else self.normals[idx],
                          None if self.valid is None else self.valid[idx])


def _renormalise(n):
    lens = np.linalg.norm(n, axis=1, keepdims=True)
    out = np.zeros_like(n)
    np.divide(n, lens, out=out, where=lens > 0)
    return out


def compute_vertex_normals(mesh: TriangleMesh):
    """Area-weighted vertex normals.

    Returns ``(normals, valid)``; vertices touched by no non-degenerate face
    get a zero normal and ``valid=False``.
    """
    fn = mesh.face_normals()  # |fn| = 2 * area, so summing weights by area
    acc = np.zeros((mesh.n_vertices, 3))
    for k in range(3):
        np.add.at(acc, mesh.faces[:, k], fn)
    lens = np.linalg.norm(acc, axis=1)
    scale = np.abs(acc).max() if acc.size else 0.0
    valid = lens > 1e-14 * max(scale, 1e-300)
    normals = np.zeros_like(acc)
    normals[valid] = acc[valid] / lens[valid, None]
    return normals, valid


def edge_face_counts(faces):
    """Undirected edges (sorted pairs) and how many faces use each."""
    e = np.concatenate([faces[:, [0, 1]], faces[:, [1, 2]], faces[:, [2, 0]]])
    e.sort(axis=1)
    uniq, inverse, counts = np.unique(e, axis=0, return_inverse=True, return_counts=True)
    return uniq, inverse.reshape(-1), counts


def detect_boundary_triangles(mesh: TriangleMesh) -> set:
    """Faces with at least one edge used by exactly one face."""
    m = mesh.n_faces
    if m == 0:
        return set()
    _, inverse, counts = edge_face_counts(mesh.faces)
    single = counts[inverse] == 1  # per (edge slot), ordered [01 | 12 | 20] blocks
    per_face = single.reshape(3, m).any(axis=0)
    return set(np.flatnonzero(per_face).tolist())


def boundary_mask(mesh: TriangleMesh) -> np.ndarray:
    mask = np.zeros(mesh.n_faces, bool)
    mask[list(detect_boundary_triangles(mesh))] = True
    return mask


def surface_centroid(mesh: TriangleMesh) -> np.ndarray:
    """Area-weighted centroid of the surface (not the vertex average)."""
    a, b, c = mesh.triangles()
    areas = 0.5 * np.linalg.norm(np.cross(b - a, c - a), axis=1)
    total = areas.sum()
    if total <= 0:
        raise DegenerateGeometryError("mesh has zero surface area")
    return ((a + b + c) / 3.0 * areas[:, None]).sum(axis=0) / total


def roi_sphere_center(target: TriangleMesh) -> np.ndarray:
    """Front-most (minimum z) hit of the z-parallel line through the centroid."""
    if target.n_faces == 0:
        raise DegenerateGeometryError("empty target mesh")
    c = surface_centroid(target)
    a, b, cc = target.triangles()
    idx, z = zray_intersections(c[0], c[1], a, b, cc)
    if len(idx) == 0:
        raise DegenerateGeometryError(
            f"the z-parallel line through the centroid ({c[0]:.3f}, {c[1]:.3f}) misses the mesh")
    return np.array([c[0], c[1], z.min()])
