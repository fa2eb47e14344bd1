"""Exact point-to-triangle distance and related low-level kernels.

The closest point is found with the planar ("2D") method: the query is
expressed in an orthonormal frame attached to the triangle, the in-plane
problem is solved exactly in 2D (inside test, else nearest of the three
edges), and the out-of-plane offset is added back.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from numba import njit

# relative area threshold below which a triangle is treated as a segment
DEGENERATE_EPS = 1e-12


@dataclass(frozen=True)
class ClosestHit:
    face_index: int
    closest_point: np.ndarray
    barycentric: np.ndarray
    distance: float


@njit(cache=True, inline="always")
def _seg_param(px, py, pz, ax, ay, az, bx, by, bz):
    ex, ey, ez = bx - ax, by - ay, bz - az
    den = ex * ex + ey * ey + ez * ez
    if den <= 0.0:
        return 0.0
    t = ((px - ax) * ex + (py - ay) * ey + (pz - az) * ez) / den
    if t < 0.0:
        return 0.0
    if t > 1.0:
        return 1.0
    return t


@njit(cache=True, inline="always")
def _edge_weights(px, py, pz, ux, uy, uz, vx, vy, vz):
    """Weights (wu, wv) of the closest point on segment uv.

    The endpoints are taken in lexicographic order, so the two faces sharing
    an edge get bit-identical results and ties between them stay exact.
    """
    if (ux, uy, uz) <= (vx, vy, vz):
        t = _seg_param(px, py, pz, ux, uy, uz, vx, vy, vz)
        return 1.0 - t, t
    t = _seg_param(px, py, pz, vx, vy, vz, ux, uy, uz)
    return t, 1.0 - t


@njit(cache=True)
def _degenerate_closest(px, py, pz, ax, ay, az, bx, by, bz, cx, cy, cz):
    # closest point on the longest edge; barycentrics stay on that edge
    lab = (bx - ax) ** 2 + (by - ay) ** 2 + (bz - az) ** 2
    lbc = (cx - bx) ** 2 + (cy - by) ** 2 + (cz - bz) ** 2
    lca = (ax - cx) ** 2 + (ay - cy) ** 2 + (az - cz) ** 2
    if lab >= lbc and lab >= lca:
        t = _seg_param(px, py, pz, ax, ay, az, bx, by, bz)
        return 1.0 - t, t, 0.0
    if lbc >= lca:
        t = _seg_param(px, py, pz, bx, by, bz, cx, cy, cz)
        return 0.0, 1.0 - t, t
    t = _seg_param(px, py, pz, cx, cy, cz, ax, ay, az)
    return t, 0.0, 1.0 - t


@njit(cache=True)
def closest_point_kernel(px, py, pz, ax, ay, az, bx, by, bz, cx, cy, cz):
    """Return (qx, qy, qz, wa, wb, wc, distance) for one point/triangle pair."""
    # a query sitting exactly on a corner gets exact one-hot weights
    if px == ax and py == ay and pz == az:
        return ax, ay, az, 1.0, 0.0, 0.0, 0.0
    if px == bx and py == by and pz == bz:
        return bx, by, bz, 0.0, 1.0, 0.0, 0.0
    if px == cx and py == cy and pz == cz:
        return cx, cy, cz, 0.0, 0.0, 1.0, 0.0
    e0x, e0y, e0z = bx - ax, by - ay, bz - az
    e1x, e1y, e1z = cx - ax, cy - ay, cz - az
    nx = e0y * e1z - e0z * e1y
    ny = e0z * e1x - e0x * e1z
    nz = e0x * e1y - e0y * e1x
    nlen = math.sqrt(nx * nx + ny * ny + nz * nz)
    l0sq = e0x * e0x + e0y * e0y + e0z * e0z
    lmax = max(l0sq, e1x * e1x + e1y * e1y + e1z * e1z,
               (cx - bx) ** 2 + (cy - by) ** 2 + (cz - bz) ** 2)

    if lmax <= 0.0 or nlen <= DEGENERATE_EPS * lmax or l0sq <= 0.0:
        wa, wb, wc = _degenerate_closest(px, py, pz, ax, ay, az, bx, by, bz, cx, cy, cz)
    else:
        # local frame: x along edge ab, z along the face normal
        L = math.sqrt(l0sq)
        ux, uy, uz = e0x / L, e0y / L, e0z / L
        zx, zy, zz = nx / nlen, ny / nlen, nz / nlen
        vx = zy * uz - zz * uy
        vy = zz * ux - zx * uz
        vz = zx * uy - zy * ux
        dx, dy, dz = px - ax, py - ay, pz - az
        # 2D triangle A=(0,0), B=(L,0), C=(Cx,Cy) with Cy > 0 (counter-clockwise)
        Cx = e1x * ux + e1y * uy + e1z * uz
        Cy = e1x * vx + e1y * vy + e1z * vz
        Px = dx * ux + dy * uy + dz * uz
        Py = dx * vx + dy * vy + dz * vz

        s_ab = L * Py
        s_bc = (Cx - L) * Py - Cy * (Px - L)
        s_ca = -Cx * (Py - Cy) + Cy * (Px - Cx)
        if s_ab >= 0.0 and s_bc >= 0.0 and s_ca >= 0.0:
            area2 = L * Cy
            wc = s_ab / area2
            wa = s_bc / area2
            wb = 1.0 - wa - wc
        else:
            # nearest of the three edges, chosen in the plane
            best = np.inf
            edge = 0
            t = Px / L
            t = 0.0 if t < 0.0 else (1.0 if t > 1.0 else t)
            d = (Px - t * L) ** 2 + Py ** 2
            if d < best:
                best, edge = d, 0
            ex, ey = Cx - L, Cy
            t = ((Px - L) * ex + Py * ey) / (ex * ex + ey * ey)
            t = 0.0 if t < 0.0 else (1.0 if t > 1.0 else t)
            d = (Px - L - t * ex) ** 2 + (Py - t * ey) ** 2
            if d < best:
                best, edge = d, 1
            ex, ey = -Cx, -Cy
            t = ((Px - Cx) * ex + (Py - Cy) * ey) / (ex * ex + ey * ey)
            t = 0.0 if t < 0.0 else (1.0 if t > 1.0 else t)
            d = (Px - Cx - t * ex) ** 2 + (Py - Cy - t * ey) ** 2
            if d < best:
                best, edge = d, 2
            # then solved on that edge in 3D
            if edge == 0:
                wa, wb = _edge_weights(px, py, pz, ax, ay, az, bx, by, bz)
                wc = 0.0
            elif edge == 1:
                wb, wc = _edge_weights(px, py, pz, bx, by, bz, cx, cy, cz)
                wa = 0.0
            else:
                wc, wa = _edge_weights(px, py, pz, cx, cy, cz, ax, ay, az)
                wb = 0.0

    wa = max(wa, 0.0)
    wb = max(wb, 0.0)
    wc = max(wc, 0.0)
    s = wa + wb + wc
    wa, wb, wc = wa / s, wb / s, wc / s
    qx = wa * ax + wb * bx + wc * cx
    qy = wa * ay + wb * by + wc * cy
    qz = wa * az + wb * bz + wc * cz
    dist = math.sqrt((px - qx) ** 2 + (py - qy) ** 2 + (pz - qz) ** 2)
    return qx, qy, qz, wa, wb, wc, dist


@njit(cache=True)
def closest_points_pairs(points, tri_a, tri_b, tri_c):
    """Vectorised kernel over aligned (point, triangle) rows."""
    n = points.shape[0]
    q = np.empty((n, 3))
    w = np.empty((n, 3))
    d = np.empty(n)
    for i in range(n):
        r = closest_point_kernel(points[i, 0], points[i, 1], points[i, 2],
                                 tri_a[i, 0], tri_a[i, 1], tri_a[i, 2],
                                 tri_b[i, 0], tri_b[i, 1], tri_b[i, 2],
                                 tri_c[i, 0], tri_c[i, 1], tri_c[i, 2])
        q[i, 0], q[i, 1], q[i, 2] = r[0], r[1], r[2]
        w[i, 0], w[i, 1], w[i, 2] = r[3], r[4], r[5]
        d[i] = r[6]
    return q, w, d


def closest_point_on_triangle(p, tri) -> ClosestHit:
    """Exact closest point of the closed triangle ``tri`` (3x3) to ``p``.

    Degenerate (zero-area) triangles fall back to their longest edge.
    """
    p = np.asarray(p, dtype=float)
    tri = np.asarray(tri, dtype=float)
    r = closest_point_kernel(p[0], p[1], p[2], *tri[0], *tri[1], *tri[2])
    return ClosestHit(-1, np.array(r[:3]), np.array(r[3:6]), float(r[6]))


@njit(cache=True)
def linear_scan_closest(p, tri_a, tri_b, tri_c):
    """Brute-force closest face; ties resolve to the lowest face index."""
    best = np.inf
    best_f = -1
    for f in range(tri_a.shape[0]):
        r = closest_point_kernel(p[0], p[1], p[2],
                                 tri_a[f, 0], tri_a[f, 1], tri_a[f, 2],
                                 tri_b[f, 0], tri_b[f, 1], tri_b[f, 2],
                                 tri_c[f, 0], tri_c[f, 1], tri_c[f, 2])
        if r[6] < best:
            best = r[6]
            best_f = f
    return best_f, best


def zray_intersections(x, y, tri_a, tri_b, tri_c, eps=1e-12):
    """z-coordinates where the line {(x, y, z)} meets each triangle.

    Returns (face_indices, z_values). Edge/vertex hits count (closed
    triangles, with a small relative tolerance). Faces seen edge-on
    (zero projected area) are skipped.
    """
    ax, ay = tri_a[:, 0], tri_a[:, 1]
    bx, by = tri_b[:, 0], tri_b[:, 1]
    cx, cy = tri_c[:, 0], tri_c[:, 1]
    det = (bx - ax) * (cy - ay) - (cx - ax) * (by - ay)
    scale = np.maximum.reduce([np.abs(bx - ax), np.abs(by - ay),
                               np.abs(cx - ax), np.abs(cy - ay)]) ** 2
    ok = np.abs(det) > eps * np.maximum(scale, 1e-300)
    with np.errstate(divide="ignore", invalid="ignore"):
        wb = ((x - ax) * (cy - ay) - (cx - ax) * (y - ay)) / det
        wc = ((bx - ax) * (y - ay) - (x - ax) * (by - ay)) / det
        wa = 1.0 - wb - wc
    tol = 1e-9
    hit = ok & (wa >= -tol) & (wb >= -tol) & (wc >= -tol)
    idx = np.flatnonzero(hit)
    z = wa[idx] * tri_a[idx, 2] + wb[idx] * tri_b[idx, 2] + wc[idx] * tri_c[idx, 2]
    return idx, z
