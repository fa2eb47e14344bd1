"""Procedural meshes used as fixtures and synthetic ground truth."""
from __future__ import annotations

import numpy as np

from .mesh import PointCloud, TriangleMesh, compute_vertex_normals


def tetrahedron(size=1.0) -> TriangleMesh:
    v = size * np.array([[1, 1, 1], [1, -1, -1], [-1, 1, -1], [-1, -1, 1]], float)
    f = np.array([[0, 1, 2], [0, 3, 1], [0, 2, 3], [1, 3, 2]])
    return TriangleMesh(v, f)


def icosphere(subdivisions=3, radius=1.0, center=(0, 0, 0), analytic_normals=True) -> TriangleMesh:
    t = (1 + 5 ** 0.5) / 2
    v = [[-1, t, 0], [1, t, 0], [-1, -t, 0], [1, -t, 0], [0, -1, t], [0, 1, t],
         [0, -1, -t], [0, 1, -t], [t, 0, -1], [t, 0, 1], [-t, 0, -1], [-t, 0, 1]]
    f = [[0, 11, 5], [0, 5, 1], [0, 1, 7], [0, 7, 10], [0, 10, 11], [1, 5, 9], [5, 11, 4],
         [11, 10, 2], [10, 7, 6], [7, 1, 8], [3, 9, 4], [3, 4, 2], [3, 2, 6], [3, 6, 8],
         [3, 8, 9], [4, 9, 5], [2, 4, 11], [6, 2, 10], [8, 6, 7], [9, 8, 1]]
    verts = [np.array(p, float) / np.linalg.norm(p) for p in v]
    faces = f
    for _ in range(subdivisions):
        cache = {}

        def mid(i, j):
            key = (min(i, j), max(i, j))
            if key not in cache:
                m = verts[i] + verts[j]
                verts.append(m / np.linalg.norm(m))
                cache[key] = len(verts) - 1
            return cache[key]

        nf = []
        for a, b, c in faces:
            ab, bc, ca = mid(a, b), mid(b, c), mid(c, a)
            nf += [[a, ab, ca], [b, bc, ab], [c, ca, bc], [ab, bc, ca]]
        faces = nf
    unit = np.array(verts)
    mesh = TriangleMesh(unit * radius + np.asarray(center, float), np.array(faces))
    if analytic_normals:
        return mesh.replace(vertex_normals=unit)
    return mesh.with_normals()


def uv_sphere(n_lat=32, n_lon=64, radius=1.0, center=(0, 0, 0)) -> TriangleMesh:
    """Latitude/longitude sphere with poles on the z axis (exact analytic normals)."""
    verts = [[0, 0, -1.0]]
    for i in range(1, n_lat):
        th = np.pi * i / n_lat  # from -z pole
        for j in range(n_lon):
            ph = 2 * np.pi * j / n_lon
            verts.append([np.sin(th) * np.cos(ph), np.sin(th) * np.sin(ph), -np.cos(th)])
    verts.append([0, 0, 1.0])
    faces = []
    top = len(verts) - 1
    ring = lambda i, j: 1 + (i - 1) * n_lon + (j % n_lon)
    for j in range(n_lon):
        faces.append([0, ring(1, j + 1), ring(1, j)])
    for i in range(1, n_lat - 1):
        for j in range(n_lon):
            a, b = ring(i, j), ring(i, j + 1)
            c, d = ring(i + 1, j), ring(i + 1, j + 1)
            faces += [[a, b, d], [a, d, c]]
    for j in range(n_lon):
        faces.append([top, ring(n_lat - 1, j), ring(n_lat - 1, j + 1)])
    unit = np.array(verts)
    return TriangleMesh(unit * radius + np.asarray(center, float), np.array(faces),
                        vertex_normals=unit)


def hemisphere(n_lat=16, n_lon=64, radius=1.0) -> TriangleMesh:
    """Front (z <= 0) half of a UV sphere; open along the equator."""
    full = uv_sphere(2 * n_lat, n_lon, radius)
    keep_v = full.vertices[:, 2] <= 1e-12
    keep_f = keep_v[full.faces].all(axis=1)
    remap = -np.ones(full.n_vertices, np.int64)
    remap[keep_v] = np.arange(keep_v.sum())
    return TriangleMesh(full.vertices[keep_v], remap[full.faces[keep_f]],
                        vertex_normals=full.vertex_normals[keep_v])


def planar_grid(nx=3, ny=3, spacing=1.0, z=0.0) -> TriangleMesh:
    xs, ys = np.meshgrid(np.arange(nx) * spacing, np.arange(ny) * spacing, indexing="xy")
    v = np.column_stack([xs.ravel(), ys.ravel(), np.full(xs.size, z)])
    faces = []
    for j in range(ny - 1):
        for i in range(nx - 1):
            a = j * nx + i
            faces += [[a, a + 1, a + nx + 1], [a, a + nx + 1, a + nx]]
    return TriangleMesh(v, np.array(faces)).with_normals()


def box(size=(1.0, 1.0, 1.0), n=4) -> TriangleMesh:
    """Closed axis-aligned box, each side split into an n x n grid (outward winding)."""
    sx, sy, sz = np.asarray(size, float) / 2
    verts, faces, index = [], [], {}

    def vid(p):
        key = tuple(np.round(p, 12))
        if key not in index:
            index[key] = len(verts)
            verts.append(p)
        return index[key]

    g = np.linspace(-1, 1, n + 1)
    for axis in range(3):
        for sign in (-1, 1):
            u_ax, v_ax = [a for a in range(3) if a != axis]
            grid = {}
            for i, u in enumerate(g):
                for j, w in enumerate(g):
                    p = np.zeros(3)
                    p[axis], p[u_ax], p[v_ax] = sign, u, w
                    grid[i, j] = vid(p * [sx, sy, sz])
            for i in range(n):
                for j in range(n):
                    a, b, c, d = grid[i, j], grid[i + 1, j], grid[i + 1, j + 1], grid[i, j + 1]
                    # orientation: (u x v) points along +axis for cyclic axis order
                    flip = (sign > 0) != ((u_ax, v_ax) in ((1, 2), (2, 0), (0, 1)))
                    if flip:
                        faces += [[a, c, b], [a, d, c]]
                    else:
                        faces += [[a, b, c], [a, c, d]]
    return TriangleMesh(np.array(verts), np.array(faces)).with_normals()


def torus(R=3.0, r=1.0, nu=48, nv=24) -> TriangleMesh:
    u = 2 * np.pi * np.arange(nu) / nu
    v = 2 * np.pi * np.arange(nv) / nv
    U, V = np.meshgrid(u, v, indexing="ij")
    x = (R + r * np.cos(V)) * np.cos(U)
    y = (R + r * np.cos(V)) * np.sin(U)
    z = r * np.sin(V)
    verts = np.column_stack([x.ravel(), y.ravel(), z.ravel()])
    normals = np.column_stack([(np.cos(V) * np.cos(U)).ravel(), (np.cos(V) * np.sin(U)).ravel(),
                               np.sin(V).ravel()])
    idx = lambda i, j: (i % nu) * nv + (j % nv)
    faces = []
    for i in range(nu):
        for j in range(nv):
            a, b, c, d = idx(i, j), idx(i + 1, j), idx(i + 1, j + 1), idx(i, j + 1)
            faces += [[a, b, c], [a, c, d]]
    return TriangleMesh(verts, np.array(faces), vertex_normals=normals)


def torso_phantom(n_theta=160, n_y=80, height=400.0, capped=True, center=(0.0, 0.0, 0.0)):
    """Torso-like test surface in millimetres.

    An elliptic tube (300 mm wide, 200 mm deep) around the vertical y axis
    with two unequal breast mounds facing -z plus a smaller asymmetric
    bump, so it has no rigid symmetry. Front-most point faces the camera at
    -z. With ``capped`` the tube ends are closed by fans (watertight).
    """
    a, b = 150.0, 100.0
    th = 2 * np.pi * np.arange(n_theta) / n_theta  # theta=0 is the front (-z)
    ys = np.linspace(-height / 2, height / 2, n_y)
    T, Y = np.meshgrid(th, ys, indexing="ij")
    # radial offsets along the outward ellipse direction
    bumps = (
        46.0 * np.exp(-(_angdiff(T, 0.50) ** 2 * 150 ** 2 + (Y - 25.0) ** 2) / (2 * 48.0 ** 2))
        + 38.0 * np.exp(-(_angdiff(T, -0.46) ** 2 * 150 ** 2 + (Y - 35.0) ** 2) / (2 * 44.0 ** 2))
        + 14.0 * np.exp(-(_angdiff(T, 2.3) ** 2 * 150 ** 2 + (Y + 110.0) ** 2) / (2 * 30.0 ** 2))
    )
    # slight taper toward the waist
    taper = 1.0 - 0.12 * np.clip((Y + 60.0) / 140.0, 0, 1) ** 2
    x = (a * taper) * np.sin(T)
    z = -(b * taper) * np.cos(T)
    # outward normal of the ellipse at parameter T
    nx_, nz_ = b * np.sin(T), -a * np.cos(T)
    nl = np.hypot(nx_, nz_)
    x = x + bumps * nx_ / nl
    z = z + bumps * nz_ / nl
    verts = np.column_stack([x.ravel(), Y.ravel(), z.ravel()])
    idx = lambda i, j: (i % n_theta) * n_y + j
    faces = []
    for i in range(n_theta):
        for j in range(n_y - 1):
            p, q, r, s = idx(i, j), idx(i + 1, j), idx(i + 1, j + 1), idx(i, j + 1)
            faces += [[p, r, q], [p, s, r]]
    if capped:
        for j, flip in ((0, False), (n_y - 1, True)):
            c = len(verts)
            ring = verts[[idx(i, j) for i in range(n_theta)]]
            verts = np.vstack([verts, ring.mean(axis=0)])
            for i in range(n_theta):
                f = [c, idx(i, j), idx(i + 1, j)]
                faces.append(f[::-1] if flip else f)
    mesh = TriangleMesh(verts + np.asarray(center, float), np.array(faces))
    # make sure winding gives outward normals (front normal points to -z)
    n, _ = compute_vertex_normals(mesh)
    front = np.argmin(mesh.vertices[:, 2])
    if n[front, 2] > 0:
        mesh = TriangleMesh(mesh.vertices, mesh.faces[:, ::-1])
    return mesh.with_normals()


def _angdiff(a, b):
    return np.angle(np.exp(1j * (a - b)))


def sample_surface(mesh: TriangleMesh, n: int, seed: int = 0) -> PointCloud:
    """Area-uniform random points on the mesh with interpolated vertex normals."""
    rng = np.random.default_rng(seed)
    mesh = mesh.with_normals()
    areas = mesh.face_areas()
    f = rng.choice(mesh.n_faces, size=n, p=areas / areas.sum())
    r1, r2 = rng.random(n), rng.random(n)
    s = np.sqrt(r1)
    w = np.column_stack([1 - s, s * (1 - r2), s * r2])
    tri = mesh.faces[f]
    pts = np.einsum("ij,ijk->ik", w, mesh.vertices[tri])
    nrm = np.einsum("ij,ijk->ik", w, mesh.vertex_normals[tri])
    nrm /= np.linalg.norm(nrm, axis=1, keepdims=True)
    return PointCloud(pts, nrm)
