"""Surface-to-surface distance and normal deviation of a reconstruction.

Both metrics are unidirectional (source points to target triangles),
confined to a sphere around the region of interest, and ignore source
points whose closest target triangle lies on the mesh boundary.
"""
from __future__ import annotations

import csv
import io
import json
import math
from dataclasses import asdict, dataclass
from typing import Optional

import numpy as np

from .bvh import BvhTree, build_bvh, closest_points
from .errors import ContractError
from .mesh import PointCloud, TriangleMesh, boundary_mask, roi_sphere_center

INCLUDED, OUTSIDE_ROI, BOUNDARY, NO_NORMAL = 0, 1, 2, 3
STATUS_NAMES = ("included", "outside-roi", "boundary-excluded", "no-normal")
SENTINEL = -1.0


@dataclass(frozen=True)
class RoiSphere:
    center: np.ndarray
    radius: float

    def __post_init__(self):
        object.__setattr__(self, "center", np.asarray(self.center, float).reshape(3))
        if not self.radius > 0:
            raise ContractError("ROI radius must be positive")

    @classmethod
    def around(cls, target: TriangleMesh, radius=100.0) -> "RoiSphere":
        return cls(roi_sphere_center(target), radius)

    @classmethod
    def everything(cls, *clouds) -> "RoiSphere":
        """A sphere enclosing all given point sets (for whole-surface evaluation)."""
        pts = np.vstack([np.asarray(c) for c in clouds])
        c = 0.5 * (pts.min(axis=0) + pts.max(axis=0))
        return cls(c, float(np.linalg.norm(pts - c, axis=1).max()) * 1.01 + 1e-9)

    def contains(self, points) -> np.ndarray:
        return np.linalg.norm(np.asarray(points) - self.center, axis=1) <= self.radius

    def to_dict(self):
        return {"center_mm": self.center.tolist(), "radius_mm": float(self.radius)}


@dataclass(frozen=True)
class Summary:
    """Population statistics over included values; ``empty`` instead of NaN."""

    n: int
    mean: float
    std: float
    median: float
    rms: float
    max: float
    empty: bool = False

    def to_dict(self):
        d = asdict(self)
        if self.empty:
            for k in ("mean", "std", "median", "rms", "max"):
                d[k] = None
        return d

    def __str__(self):
        return "empty" if self.empty else f"{self.mean:.3f}±{self.std:.3f}"


def aggregate(values, statuses=None) -> Summary:
    """Mean, population std, median, RMS and max over entries with status 'included'."""
    v = np.asarray(values, dtype=float).reshape(-1)
    if statuses is not None:
        st = np.asarray(statuses).reshape(-1)
        if len(st) != len(v):
            raise ContractError("values and statuses differ in length")
        v = v[st == INCLUDED]
    if len(v) == 0:
        return Summary(0, 0.0, 0.0, 0.0, 0.0, 0.0, empty=True)
    mean = float(np.sum(v) / len(v))
    var = float(np.sum((v - mean) ** 2) / len(v))
    return Summary(len(v), mean, math.sqrt(var), float(np.median(v)),
                   float(math.sqrt(np.sum(v * v) / len(v))), float(v.max()))


@dataclass
class SurfaceErrorReport:
    """Per-point errors with exclusion flags.

    ``status`` follows the priority outside-roi > boundary-excluded >
    no-normal. A no-normal point still has a valid distance, so the distance
    summary uses points whose distance status is included (status included
    or no-normal) while the angle summary uses status == included.
    """

    distance: np.ndarray
    angle: np.ndarray
    status: np.ndarray
    face: np.ndarray
    roi: RoiSphere

    @property
    def n(self):
        return len(self.status)

    def distance_status(self):
        return np.where(self.status == NO_NORMAL, INCLUDED, self.status)

    @property
    def distance_summary(self) -> Summary:
        return aggregate(self.distance, self.distance_status())

    @property
    def angle_summary(self) -> Summary:
        return aggregate(self.angle, self.status)

    def counts(self) -> dict:
        c = np.bincount(self.status, minlength=4)
        return {name: int(c[i]) for i, name in enumerate(STATUS_NAMES)}

    def summary_dict(self) -> dict:
        return {
            "n_points": int(self.n),
            "roi": self.roi.to_dict(),
            "counts": self.counts(),
            "distance_mm": self.distance_summary.to_dict(),
            "normal_deviation_deg": self.angle_summary.to_dict(),
            "std_convention": "population",
        }

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["index", "distance_mm", "angle_deg", "status"])
        for i in range(self.n):
            a = self.angle[i]
            w.writerow([i, repr(float(self.distance[i])),
                        "" if np.isnan(a) else repr(float(a)), STATUS_NAMES[self.status[i]]])
        return buf.getvalue()


def _prepare(target, bvh, boundary):
    if target.n_faces == 0:
        raise ContractError("target mesh is empty")
    bvh = bvh if bvh is not None else build_bvh(target)
    boundary = boundary if boundary is not None else boundary_mask(target)
    return bvh, boundary


def _closest(source: PointCloud, target, roi, bvh, boundary):
    n = len(source)
    if n == 0:
        raise ContractError("source point cloud is empty")
    status = np.full(n, OUTSIDE_ROI, np.int64)
    inside = np.flatnonzero(roi.contains(source.points))
    dist = np.full(n, np.nan)
    face = np.full(n, -1, np.int64)
    bary = np.zeros((n, 3))
    if len(inside):
        f, _, w, d = closest_points(bvh, source.points[inside])
        dist[inside], face[inside], bary[inside] = d, f, w
        status[inside] = np.where(boundary[f], BOUNDARY, INCLUDED)
    return dist, face, bary, status


def surface_distance(source: PointCloud, target: TriangleMesh, roi: Optional[RoiSphere] = None,
                     bvh: Optional[BvhTree] = None, boundary=None) -> SurfaceErrorReport:
    """Distance from each source point to its closest target triangle (mm)."""
    bvh, boundary = _prepare(target, bvh, boundary)
    roi = roi or RoiSphere.around(target)
    dist, face, _, status = _closest(source, target, roi, bvh, boundary)
    return SurfaceErrorReport(dist, np.full(len(dist), np.nan), status, face, roi)


def interpolated_normals(target: TriangleMesh, face, bary):
    vn = target.vertex_normals[target.faces[face]]
    n = np.einsum("ij,ijk->ik", bary, vn)
    lens = np.linalg.norm(n, axis=1, keepdims=True)
    # leave already-unit normals untouched so a vertex query returns its stored normal bit for bit
    fix = (lens > 0) & (np.abs(lens - 1.0) > 1e-12)
    out = np.where(lens > 0, n, 0.0)
    return np.divide(out, lens, out=out, where=fix)


def angle_between(a, b):
    """Angle in degrees between row vectors, equal to arccos of the clamped dot product.

    Evaluated as atan2(|a x b|, a . b), which is exact near 0 and 180 degrees.
    """
    cross = np.linalg.norm(np.cross(a, b), axis=1)
    dot = np.clip(np.einsum("ij,ij->i", a, b), -1.0, 1.0)
    return np.degrees(np.arctan2(cross, dot))


def normal_deviation(source: PointCloud, target: TriangleMesh, roi: Optional[RoiSphere] = None,
                     bvh: Optional[BvhTree] = None, boundary=None) -> SurfaceErrorReport:
    """Angle between each source normal and the barycentric target normal at the closest point."""
    return evaluate_surface(source, target, roi, bvh, boundary)


def evaluate_surface(source: PointCloud, target: TriangleMesh, roi: Optional[RoiSphere] = None,
                     bvh: Optional[BvhTree] = None, boundary=None) -> SurfaceErrorReport:
    """Both metrics in one pass over the closest-triangle queries."""
    if target.vertex_normals is None:
        raise ContractError("target mesh needs vertex normals")
    bvh, boundary = _prepare(target, bvh, boundary)
    roi = roi or RoiSphere.around(target)
    dist, face, bary, status = _closest(source, target, roi, bvh, boundary)
    angle = np.full(len(dist), np.nan)
    ok = status == INCLUDED
    src_ok = source.normal_ok()
    status[ok & ~src_ok] = NO_NORMAL
    ok &= src_ok
    idx = np.flatnonzero(ok)
    if len(idx):
        nhat = interpolated_normals(target, face[idx], bary[idx])
        good = np.linalg.norm(nhat, axis=1) > 0
        angle[idx[good]] = angle_between(source.normals[idx[good]], nhat[good])
        status[idx[~good]] = NO_NORMAL
    return SurfaceErrorReport(dist, angle, status, face, roi)


def colormap_scalar(report: SurfaceErrorReport, channel="distance") -> np.ndarray:
    if channel == "distance":
        vals, st = report.distance, report.distance_status()
    elif channel == "angle":
        vals, st = report.angle, report.status
    else:
        raise ContractError(f"unknown channel {channel!r}")
    return np.where(st == INCLUDED, vals, SENTINEL)


def export_colormap(report: SurfaceErrorReport, geometry, channel="distance", fmt="ply-binary-le",
                    meta: Optional[dict] = None):
    """Geometry with the error as the per-vertex 'quality' scalar (-1 where excluded).

    Returns ``(file_bytes, sidecar_dict)``.
    """
    from .meshio import write_mesh

    n = geometry.n_vertices if isinstance(geometry, TriangleMesh) else len(geometry)
    if n != report.n:
        raise ContractError(f"report has {report.n} points but geometry has {n} vertices")
    scalar = colormap_scalar(report, channel)
    sidecar = {"channel": channel, "sentinel": SENTINEL, "summary": report.summary_dict()}
    if meta:
        sidecar.update(meta)
    data = write_mesh(geometry, scalar, fmt, [json.dumps(sidecar, sort_keys=True)])
    return data, sidecar
