"""Axis-aligned bounding volume hierarchy for closest-triangle queries.

Built once per mesh with a median split of face centroids along the widest
centroid axis; stored as flat arrays so traversal runs in a numba kernel.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from numba import njit

from .errors import ContractError
from .geometry import ClosestHit, closest_point_kernel
from .mesh import TriangleMesh

LEAF_SIZE = 4


@dataclass(frozen=True, eq=False)
class BvhTree:
    node_min: np.ndarray   # (K, 3)
    node_max: np.ndarray   # (K, 3)
    left: np.ndarray       # child index or -1 for leaves
    right: np.ndarray
    start: np.ndarray      # leaf range into face_order
    count: np.ndarray
    face_order: np.ndarray
    tri_a: np.ndarray
    tri_b: np.ndarray
    tri_c: np.ndarray

    @property
    def n_nodes(self):
        return len(self.left)

    def leaves(self):
        """Face-index lists of all leaves (for invariant checks)."""
        out = []
        for k in range(self.n_nodes):
            if self.left[k] < 0:
                s, c = self.start[k], self.count[k]
                out.append(self.face_order[s:s + c].tolist())
        return out


def build_bvh(mesh: TriangleMesh, leaf_size: int = LEAF_SIZE) -> BvhTree:
    if mesh.n_faces == 0:
        raise ContractError("cannot build a BVH over an empty mesh")
    a, b, c = mesh.triangles()
    fmin = np.minimum(np.minimum(a, b), c)
    fmax = np.maximum(np.maximum(a, b), c)
    cent = (a + b + c) / 3.0
    order = np.arange(mesh.n_faces)

    node_min, node_max, left, right, start, count = [], [], [], [], [], []

    def new_node():
        node_min.append(None)
        node_max.append(None)
        left.append(-1)
        right.append(-1)
        start.append(0)
        count.append(0)
        return len(left) - 1

    root = new_node()
    stack = [(root, 0, mesh.n_faces)]
    while stack:
        node, lo, hi = stack.pop()
        ids = order[lo:hi]
        node_min[node] = fmin[ids].min(axis=0)
        node_max[node] = fmax[ids].max(axis=0)
        n = hi - lo
        if n <= leaf_size:
            start[node], count[node] = lo, n
            continue
        cmin, cmax = cent[ids].min(axis=0), cent[ids].max(axis=0)
        axis = int(np.argmax(cmax - cmin))
        mid = n // 2
        # stable tie-break on face index keeps builds deterministic
        key = np.lexsort((ids, cent[ids, axis]))
        order[lo:hi] = ids[key]
        l, r = new_node(), new_node()
        left[node], right[node] = l, r
        stack.append((r, lo + mid, hi))
        stack.append((l, lo, lo + mid))

    return BvhTree(np.array(node_min), np.array(node_max), np.array(left, np.int64),
                   np.array(right, np.int64), np.array(start, np.int64),
                   np.array(count, np.int64), order.astype(np.int64), a, b, c)


@njit(cache=True, inline="always")
def _box_d2(p0, p1, p2, bmin, bmax, k):
    d = 0.0
    if p0 < bmin[k, 0]:
        d += (bmin[k, 0] - p0) ** 2
    elif p0 > bmax[k, 0]:
        d += (p0 - bmax[k, 0]) ** 2
    if p1 < bmin[k, 1]:
        d += (bmin[k, 1] - p1) ** 2
    elif p1 > bmax[k, 1]:
        d += (p1 - bmax[k, 1]) ** 2
    if p2 < bmin[k, 2]:
        d += (bmin[k, 2] - p2) ** 2
    elif p2 > bmax[k, 2]:
        d += (p2 - bmax[k, 2]) ** 2
    return d


@njit(cache=True)
def _query(px, py, pz, node_min, node_max, left, right, start, count, order, ta, tb, tc, out):
    """Fills out=[qx,qy,qz,wa,wb,wc,dist] and returns the face index."""
    best = np.inf
    best_f = -1
    stack = np.empty(128, np.int64)
    sp = 0
    stack[sp] = 0
    sp += 1
    while sp > 0:
        sp -= 1
        k = stack[sp]
        bd = _box_d2(px, py, pz, node_min, node_max, k)
        # slack keeps exact-tie faces reachable for the lowest-index rule
        if bd > best * best * (1.0 + 1e-12):
            continue
        if left[k] < 0:
            for j in range(start[k], start[k] + count[k]):
                f = order[j]
                r = closest_point_kernel(px, py, pz, ta[f, 0], ta[f, 1], ta[f, 2],
                                         tb[f, 0], tb[f, 1], tb[f, 2],
                                         tc[f, 0], tc[f, 1], tc[f, 2])
                if r[6] < best or (r[6] == best and f < best_f):
                    best = r[6]
                    best_f = f
                    for i in range(7):
                        out[i] = r[i]
            continue
        l = left[k]
        r_ = right[k]
        dl = _box_d2(px, py, pz, node_min, node_max, l)
        dr = _box_d2(px, py, pz, node_min, node_max, r_)
        # push the farther child first so the nearer one is popped next
        if dl <= dr:
            stack[sp] = r_
            stack[sp + 1] = l
        else:
            stack[sp] = l
            stack[sp + 1] = r_
        sp += 2
    return best_f


@njit(cache=True)
def _query_batch(points, node_min, node_max, left, right, start, count, order, ta, tb, tc):
    n = points.shape[0]
    faces = np.empty(n, np.int64)
    q = np.empty((n, 3))
    w = np.empty((n, 3))
    d = np.empty(n)
    out = np.empty(7)
    for i in range(n):
        faces[i] = _query(points[i, 0], points[i, 1], points[i, 2], node_min, node_max,
                          left, right, start, count, order, ta, tb, tc, out)
        q[i, 0], q[i, 1], q[i, 2] = out[0], out[1], out[2]
        w[i, 0], w[i, 1], w[i, 2] = out[3], out[4], out[5]
        d[i] = out[6]
    return faces, q, w, d


def closest_triangle(bvh: BvhTree, mesh: TriangleMesh, p) -> ClosestHit:
    """Globally closest face to ``p``; ties go to the lowest face index."""
    if mesh.n_faces == 0:
        raise ContractError("closest_triangle on an empty mesh")
    f, q, w, d = closest_points(bvh, np.asarray(p, float).reshape(1, 3))
    return ClosestHit(int(f[0]), q[0], w[0], float(d[0]))


def closest_points(bvh: BvhTree, points):
    """Batch query. Returns (face_index, closest_point, barycentric, distance) arrays."""
    pts = np.ascontiguousarray(np.reshape(points, (-1, 3)), dtype=np.float64)
    return _query_batch(pts, bvh.node_min, bvh.node_max, bvh.left, bvh.right, bvh.start,
                        bvh.count, bvh.face_order, bvh.tri_a, bvh.tri_b, bvh.tri_c)
