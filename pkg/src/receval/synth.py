"""Synthetic RGBD sequences rendered from a mesh, and a point-based fuser.

Camera convention: pinhole with x right, y down, z forward (optical axis);
pixel (u, v) has its centre at integer coordinates, so a camera point
(x, y, z) projects to u = fx x / z + cx, v = fy y / z + cy. Poses map camera
coordinates to world coordinates. Depth is the camera z coordinate stored in
16-bit units of ``depth_scale`` millimetres, 0 meaning no surface.
"""
from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass
from pathlib import Path
from typing import List, Optional, Sequence

import numpy as np
from numba import njit

from .errors import ContractError, ParseError
from .mesh import PointCloud, TriangleMesh, surface_centroid
from .registration import VoxelAccumulator
from .trajectory import Pose, Trajectory, parse_trajectory
from .transform import RigidTransform

MAX_GAP_S = 0.1
NEAR_MM = 1.0


@dataclass(frozen=True)
class PinholeCamera:
    fx: float = 570.0
    fy: float = 570.0
    cx: float = 319.5
    cy: float = 239.5
    width: int = 640
    height: int = 480
    depth_scale: float = 0.1  # mm per stored unit

    def __post_init__(self):
        if not (self.fx > 0 and self.fy > 0):
            raise ContractError("focal lengths must be positive")
        if not (0 <= self.cx < self.width and 0 <= self.cy < self.height):
            raise ContractError("principal point must lie inside the image")
        if not self.depth_scale > 0:
            raise ContractError("depth scale must be positive")

    def footprint(self, depth):
        """Lateral size (mm) of one pixel at the given depth."""
        return np.asarray(depth) * max(1.0 / self.fx, 1.0 / self.fy)

    def to_dict(self):
        return asdict(self)


@dataclass(eq=False)
class DepthFrame:
    depth: np.ndarray                     # (H, W) uint16, 0 = invalid
    timestamp: float = 0.0
    normals: Optional[np.ndarray] = None  # (H, W, 3) camera-space unit normals, 0 where invalid
    color: Optional[np.ndarray] = None    # (H, W, 3) uint8

    def __post_init__(self):
        self.depth = np.asarray(self.depth)
        if self.depth.dtype != np.uint16 or self.depth.ndim != 2:
            raise ContractError("depth must be a 2-D uint16 array")

    @property
    def valid(self):
        return self.depth > 0

    def depth_mm(self, camera: PinholeCamera) -> np.ndarray:
        return self.depth.astype(np.float64) * camera.depth_scale


@dataclass(eq=False)
class RgbdSequence:
    frames: List[DepthFrame]
    camera: PinholeCamera
    trajectory: Trajectory
    max_gap: Optional[float] = MAX_GAP_S

    def __post_init__(self):
        if len(self.frames) != len(self.trajectory):
            raise ContractError(f"{len(self.frames)} frames but {len(self.trajectory)} poses")
        for f, p in zip(self.frames, self.trajectory):
            if f.timestamp != p.timestamp:
                raise ContractError(f"frame at t={f.timestamp} has pose at t={p.timestamp}")
            if f.depth.shape != (self.camera.height, self.camera.width):
                raise ContractError("frame dimensions differ from the camera")
        ts = [f.timestamp for f in self.frames]
        if self.max_gap is not None and len(ts) > 1:
            gap = float(np.max(np.diff(ts)))
            if gap > self.max_gap + 1e-12:
                raise ContractError(f"timestamp gap {gap:.4f} s exceeds {self.max_gap} s")

    def __len__(self):
        return len(self.frames)


# --------------------------------------------------------------------------- trajectory

def orbit_pose(center, radius, azimuth_rad, timestamp=0.0) -> Pose:
    """Camera on a horizontal circle looking at ``center``; azimuth 0 views along +z."""
    s, c = math.sin(azimuth_rad), math.cos(azimuth_rad)
    R = np.array([[c, 0.0, -s],
                  [0.0, 1.0, 0.0],
                  [s, 0.0, c]])  # columns: camera x, y, z axes in world
    pos = np.asarray(center, float) + radius * np.array([s, 0.0, -c])
    return Pose.from_transform(timestamp, RigidTransform.from_rt(R, pos))


def circular_trajectory(center=(0.0, 0.0, 0.0), radius=900.0, arc=180.0, n_frames=608,
                        frame_rate=608 / 11.5, start=None, t0=0.0) -> Trajectory:
    """``n_frames`` poses evenly spaced over ``arc`` degrees of a horizontal circle.

    The sweep starts at azimuth ``start`` (degrees; default ``-arc / 2`` so the
    sweep is centred on the -z side of ``center``) and timestamps advance by
    ``1 / frame_rate`` seconds.
    """
    if n_frames < 2:
        raise ContractError("an orbit needs at least 2 frames")
    if not radius > 0:
        raise ContractError("orbit radius must be positive")
    if not frame_rate > 0:
        raise ContractError("frame rate must be positive")
    start = -arc / 2.0 if start is None else start
    az = np.radians(start + arc * np.arange(n_frames) / (n_frames - 1))
    return Trajectory(orbit_pose(center, radius, a, t0 + i / frame_rate) for i, a in enumerate(az))


# --------------------------------------------------------------------------- rasterizer

@njit(cache=True, inline="always")
def _owns_edge(dx, dy):
    # tie rule for pixels exactly on an edge: antisymmetric in the edge direction,
    # so of two triangles sharing an edge exactly one claims the pixel
    return dy > 0.0 or (dy == 0.0 and dx < 0.0)


@njit(cache=True)
def _rasterize(vc, faces, fx, fy, cx, cy, width, height, near):
    zbuf = np.full((height, width), np.inf)
    fid = np.full((height, width), -1, np.int64)
    bary = np.zeros((height, width, 3))
    nv = vc.shape[0]
    us = np.empty(nv)
    vs = np.empty(nv)
    for i in range(nv):
        z = vc[i, 2]
        if z > near:
            us[i] = fx * vc[i, 0] / z + cx
            vs[i] = fy * vc[i, 1] / z + cy
        else:
            us[i] = np.nan
            vs[i] = np.nan
    for f in range(faces.shape[0]):
        i0, i1, i2 = faces[f, 0], faces[f, 1], faces[f, 2]
        if not (vc[i0, 2] > near and vc[i1, 2] > near and vc[i2, 2] > near):
            continue
        u0, v0, u1, v1, u2, v2 = us[i0], vs[i0], us[i1], vs[i1], us[i2], vs[i2]
        area = (u1 - u0) * (v2 - v0) - (v1 - v0) * (u2 - u0)
        if area == 0.0 or not np.isfinite(area):
            continue
        if area < 0.0:
            # reorder so the edge functions are non-negative inside
            i1, i2 = i2, i1
            u1, v1, u2, v2 = u2, v2, u1, v1
            area = -area
        xmin = max(int(math.ceil(min(u0, u1, u2))), 0)
        xmax = min(int(math.floor(max(u0, u1, u2))), width - 1)
        ymin = max(int(math.ceil(min(v0, v1, v2))), 0)
        ymax = min(int(math.floor(max(v0, v1, v2))), height - 1)
        if xmin > xmax or ymin > ymax:
            continue
        iz0, iz1, iz2 = 1.0 / vc[i0, 2], 1.0 / vc[i1, 2], 1.0 / vc[i2, 2]
        own0 = _owns_edge(u2 - u1, v2 - v1)
        own1 = _owns_edge(u0 - u2, v0 - v2)
        own2 = _owns_edge(u1 - u0, v1 - v0)
        for py in range(ymin, ymax + 1):
            for px in range(xmin, xmax + 1):
                w0 = (u2 - u1) * (py - v1) - (v2 - v1) * (px - u1)
                w1 = (u0 - u2) * (py - v2) - (v0 - v2) * (px - u2)
                w2 = (u1 - u0) * (py - v0) - (v1 - v0) * (px - u0)
                if w0 < 0.0 or w1 < 0.0 or w2 < 0.0:
                    continue
                if (w0 == 0.0 and not own0) or (w1 == 0.0 and not own1) or (w2 == 0.0 and not own2):
                    continue
                # perspective-correct: interpolate 1/z linearly in screen space
                l0, l1, l2 = w0 / area, w1 / area, w2 / area
                s0, s1, s2 = l0 * iz0, l1 * iz1, l2 * iz2
                inv = s0 + s1 + s2
                z = 1.0 / inv
                if z < zbuf[py, px]:
                    zbuf[py, px] = z
                    fid[py, px] = f
                    # barycentrics w.r.t. the face's own vertex order
                    if faces[f, 1] == i1:
                        bary[py, px, 0], bary[py, px, 1], bary[py, px, 2] = s0 * z, s1 * z, s2 * z
                    else:
                        bary[py, px, 0], bary[py, px, 1], bary[py, px, 2] = s0 * z, s2 * z, s1 * z
    return zbuf, fid, bary


@dataclass(eq=False)
class Raster:
    """Per-pixel visible surface: camera depth (mm, inf if empty), face id and barycentrics."""

    z: np.ndarray
    face: np.ndarray
    bary: np.ndarray

    @property
    def hit(self):
        return self.face >= 0


def _world_to_camera(pose) -> RigidTransform:
    T = pose.transform if isinstance(pose, Pose) else pose
    return T.inverse()


def rasterize(mesh: TriangleMesh, camera: PinholeCamera, pose) -> Raster:
    """Z-buffer the mesh as seen from ``pose`` (camera-to-world)."""
    W2C = _world_to_camera(pose)
    vc = np.ascontiguousarray(W2C.apply(mesh.vertices))
    faces = np.ascontiguousarray(mesh.faces, dtype=np.int64)
    z, f, b = _rasterize(vc, faces, float(camera.fx), float(camera.fy), float(camera.cx),
                         float(camera.cy), int(camera.width), int(camera.height), NEAR_MM)
    return Raster(z, f, b)


def quantize_depth(z, depth_scale) -> np.ndarray:
    """Round mm depths to storage units; empty or out-of-range pixels become 0."""
    units = np.where(np.isfinite(z), np.rint(z / depth_scale), 0.0)
    units[(units < 1) | (units > 65535)] = 0
    return units.astype(np.uint16)


def _normal_map(mesh: TriangleMesh, raster: Raster, W2C: RigidTransform):
    out = np.zeros(raster.z.shape + (3,))
    hit = raster.hit
    if not hit.any():
        return out
    m = mesh.with_normals()
    vn = m.vertex_normals[m.faces[raster.face[hit]]]
    n = np.einsum("ij,ijk->ik", raster.bary[hit], vn)
    n = W2C.apply_vectors(n)
    lens = np.linalg.norm(n, axis=1, keepdims=True)
    out[hit] = np.divide(n, lens, out=np.zeros_like(n), where=lens > 0)
    return out


def render_depth(mesh: TriangleMesh, camera: PinholeCamera, pose, normals: bool = False,
                 timestamp: Optional[float] = None) -> DepthFrame:
    """Noise-free depth image (and optionally a camera-space normal map)."""
    if mesh.n_faces == 0:
        raise ContractError("cannot render an empty mesh")
    r = rasterize(mesh, camera, pose)
    depth = quantize_depth(r.z, camera.depth_scale)
    nmap = None
    if normals:
        nmap = _normal_map(mesh, r, _world_to_camera(pose))
        nmap[depth == 0] = 0.0
    if timestamp is None:
        timestamp = pose.timestamp if isinstance(pose, Pose) else 0.0
    return DepthFrame(depth, float(timestamp), nmap)


# --------------------------------------------------------------------------- shading

@dataclass(frozen=True)
class PointLight:
    position: tuple
    weight: float = 0.5


SKIN_TONE = (224, 172, 140)


def default_lights(center=(0.0, 0.0, 0.0)):
    c = np.asarray(center, float)
    return (PointLight(tuple(c + [-600.0, -400.0, -1200.0]), 0.6),
            PointLight(tuple(c + [700.0, -200.0, -900.0]), 0.4))


def lambert(points, normals, lights: Sequence[PointLight], base=SKIN_TONE):
    """Diffuse intensity base * sum_i w_i max(0, n . l_i), as uint8 RGB rows."""
    shade = np.zeros(len(points))
    for L in lights:
        d = np.asarray(L.position, float) - points
        d /= np.linalg.norm(d, axis=1, keepdims=True)
        shade += L.weight * np.maximum(0.0, np.einsum("ij,ij->i", normals, d))
    rgb = np.asarray(base, float)[None, :] * shade[:, None]
    return np.clip(np.rint(rgb), 0, 255).astype(np.uint8)


def shade_lambertian(mesh: TriangleMesh, camera: PinholeCamera, pose, lights=None,
                     base=SKIN_TONE) -> np.ndarray:
    """Uniformly coloured Lambertian image lit by point lights (no shadows)."""
    if mesh.n_faces == 0:
        raise ContractError("cannot render an empty mesh")
    lights = default_lights(surface_centroid(mesh)) if lights is None else lights
    r = rasterize(mesh, camera, pose)
    img = np.zeros(r.z.shape + (3,), np.uint8)
    hit = r.hit
    if not hit.any():
        return img
    m = mesh.with_normals()
    tri = m.faces[r.face[hit]]
    pts = np.einsum("ij,ijk->ik", r.bary[hit], m.vertices[tri])
    n = np.einsum("ij,ijk->ik", r.bary[hit], m.vertex_normals[tri])
    n /= np.maximum(np.linalg.norm(n, axis=1, keepdims=True), 1e-300)
    img[hit] = lambert(pts, n, lights, base)
    return img


# --------------------------------------------------------------------------- sequences

def render_sequence(mesh: TriangleMesh, camera: PinholeCamera, trajectory: Trajectory,
                    normals: bool = True, color: bool = False, lights=None,
                    max_gap: Optional[float] = MAX_GAP_S) -> RgbdSequence:
    frames = []
    for p in trajectory:
        f = render_depth(mesh, camera, p, normals=normals)
        if color:
            f.color = shade_lambertian(mesh, camera, p, lights)
        frames.append(f)
    return RgbdSequence(frames, camera, Trajectory(trajectory), max_gap)


def _pixel_rays(camera: PinholeCamera, rows, cols):
    return np.column_stack([(cols - camera.cx) / camera.fx, (rows - camera.cy) / camera.fy,
                            np.ones(len(rows))])


def _gradient_normals(zmm, camera: PinholeCamera, rel_jump=0.05):
    """Camera-space normals from central (else one-sided) depth differences."""
    H, W = zmm.shape
    v, u = np.mgrid[0:H, 0:W]
    P = np.stack([(u - camera.cx) / camera.fx * zmm, (v - camera.cy) / camera.fy * zmm, zmm], axis=-1)
    ok = zmm > 0

    def diff(axis):
        fwd = np.zeros_like(P)
        bwd = np.zeros_like(P)
        okf = np.zeros_like(ok)
        okb = np.zeros_like(ok)
        sl = [slice(None)] * 2
        lo, hi = sl.copy(), sl.copy()
        lo[axis], hi[axis] = slice(0, -1), slice(1, None)
        lo, hi = tuple(lo), tuple(hi)
        step = P[hi] - P[lo]
        smooth = ok[hi] & ok[lo] & (np.abs(zmm[hi] - zmm[lo]) <= rel_jump * np.maximum(zmm[hi], zmm[lo]))
        fwd[lo], okf[lo] = step, smooth
        bwd[hi], okb[hi] = step, smooth
        both = okf & okb
        d = np.where(both[..., None], 0.5 * (fwd + bwd), np.where(okf[..., None], fwd, bwd))
        return d, okf | okb

    du, oku = diff(1)
    dv, okv = diff(0)
    n = np.cross(du, dv)
    lens = np.linalg.norm(n, axis=-1)
    good = ok & oku & okv & (lens > 0)
    n = np.divide(n, lens[..., None], out=np.zeros_like(n), where=good[..., None])
    # orient toward the camera
    flip = np.einsum("...k,...k->...", n, P) > 0
    n[flip] *= -1
    return n, good


def backproject(frame: DepthFrame, camera: PinholeCamera, pose) -> PointCloud:
    """Valid pixels as world points; normals from the normal map or depth gradients.

    Points whose normal could not be determined keep a zero normal and are
    flagged invalid in ``PointCloud.valid``.
    """
    if frame.depth.shape != (camera.height, camera.width):
        raise ContractError("frame dimensions differ from the camera")
    T = pose.transform if isinstance(pose, Pose) else pose
    rows, cols = np.nonzero(frame.depth)
    if len(rows) == 0:
        return PointCloud(np.zeros((0, 3)), np.zeros((0, 3)))
    z = frame.depth[rows, cols].astype(np.float64) * camera.depth_scale
    pc = _pixel_rays(camera, rows, cols) * z[:, None]
    if frame.normals is not None:
        n = np.asarray(frame.normals, float)[rows, cols]
        lens = np.linalg.norm(n, axis=1, keepdims=True)
        n = np.divide(n, lens, out=np.zeros_like(n), where=lens > 0)
    else:
        nmap, good = _gradient_normals(frame.depth_mm(camera), camera)
        n = nmap[rows, cols]
    nw = T.apply_vectors(n)
    lens = np.linalg.norm(nw, axis=1, keepdims=True)
    nw = np.divide(nw, lens, out=np.zeros_like(nw), where=lens > 0)
    return PointCloud(T.apply(pc), nw, lens[:, 0] > 0)


def fusion_leaf(seq: RgbdSequence, factor=0.5) -> float:
    """Default voxel size: half the pixel footprint at the median valid depth of the first non-empty frame."""
    for f in seq.frames:
        d = f.depth[f.depth > 0]
        if len(d):
            return float(factor * seq.camera.footprint(np.median(d) * seq.camera.depth_scale))
    return 1.0


def _pose_lookup(traj: Trajectory, frames):
    by_t = {p.timestamp: p for p in traj}
    poses = []
    for f in frames:
        p = by_t.get(f.timestamp)
        if p is None:
            raise ContractError(f"missing pose for frame at t={f.timestamp!r}")
        poses.append(p)
    return poses


def fuse_sequence(seq: RgbdSequence, traj: Optional[Trajectory] = None, leaf=None) -> PointCloud:
    """Backproject every frame with its pose and voxel-average the union.

    ``leaf=None`` picks :func:`fusion_leaf`; ``leaf=0`` keeps every point.
    Frames are streamed into the voxel grid so memory scales with the
    number of occupied voxels, not the number of pixels.
    """
    traj = seq.trajectory if traj is None else traj
    poses = _pose_lookup(traj, seq.frames)
    if len(seq.frames) == 0:
        return PointCloud(np.zeros((0, 3)), np.zeros((0, 3)))
    if leaf is None:
        leaf = fusion_leaf(seq)
    if leaf == 0:
        clouds = [backproject(f, seq.camera, p) for f, p in zip(seq.frames, poses)]
        return PointCloud(np.vstack([c.points for c in clouds]),
                          np.vstack([c.normals for c in clouds]),
                          np.concatenate([c.valid for c in clouds]))
    acc = VoxelAccumulator(leaf)
    for f, p in zip(seq.frames, poses):
        c = backproject(f, seq.camera, p)
        acc.add(c.points, c.normals, c.normal_ok())
    return acc.result()


# --------------------------------------------------------------------------- disk format

def write_pgm16(depth: np.ndarray, comment: str = "") -> bytes:
    """Binary PGM (P5), maxval 65535, big-endian samples."""
    d = np.asarray(depth)
    if d.dtype != np.uint16 or d.ndim != 2:
        raise ContractError("PGM writer expects a 2-D uint16 array")
    head = "P5\n"
    for line in comment.splitlines():
        head += f"# {line}\n"
    head += f"{d.shape[1]} {d.shape[0]}\n65535\n"
    return head.encode("ascii") + d.astype(">u2").tobytes()


def read_pgm16(data: bytes) -> np.ndarray:
    pos = 0
    tokens = []
    while len(tokens) < 4:
        while pos < len(data) and data[pos:pos + 1].isspace():
            pos += 1
        if pos >= len(data):
            raise ParseError("truncated PGM header")
        if data[pos:pos + 1] == b"#":
            end = data.find(b"\n", pos)
            pos = len(data) if end < 0 else end + 1
            continue
        start = pos
        while pos < len(data) and not data[pos:pos + 1].isspace():
            pos += 1
        tokens.append(data[start:pos])
    pos += 1  # single whitespace after maxval
    if tokens[0] != b"P5":
        raise ParseError(f"not a binary PGM (magic {tokens[0]!r})")
    try:
        w, h, maxval = (int(t) for t in tokens[1:])
    except ValueError:
        raise ParseError("non-integer PGM header field") from None
    if maxval != 65535:
        raise ParseError(f"expected maxval 65535, got {maxval}")
    need = 2 * w * h
    if len(data) - pos < need:
        raise ParseError(f"PGM body has {len(data) - pos} bytes, expected {need}")
    return np.frombuffer(data, ">u2", w * h, pos).reshape(h, w).astype(np.uint16)


def write_ppm(rgb: np.ndarray) -> bytes:
    """Binary 8-bit PPM (P6) for shaded colour frames."""
    a = np.asarray(rgb)
    if a.dtype != np.uint8 or a.ndim != 3 or a.shape[2] != 3:
        raise ContractError("PPM writer expects an (H, W, 3) uint8 array")
    return f"P6\n{a.shape[1]} {a.shape[0]}\n255\n".encode("ascii") + a.tobytes()


def frame_name(i):
    return f"depth_{i:06d}.pgm"


def save_sequence(seq: RgbdSequence, directory, meta: Optional[dict] = None, normals=False):
    """Write PGM frames, ``groundtruth.txt`` (metres) and ``manifest.json``."""
    from . import __version__

    out = Path(directory)
    (out / "depth").mkdir(parents=True, exist_ok=True)
    names = []
    tag = f" config={meta['config_digest']}" if meta and "config_digest" in meta else ""
    for i, f in enumerate(seq.frames):
        name = f"depth/{frame_name(i)}"
        (out / name).write_bytes(write_pgm16(f.depth, f"receval {__version__} t={f.timestamp!r}{tag}"))
        if normals and f.normals is not None:
            np.save(out / f"depth/normals_{i:06d}.npy", f.normals.astype(np.float32))
        names.append(name)
    (out / "groundtruth.txt").write_text(seq.trajectory.to_text("m"))
    manifest = {
        "version": __version__,
        "camera": seq.camera.to_dict(),
        "depth_scale_mm": seq.camera.depth_scale,
        "depth_format": "pgm-p5-16bit-be",
        "frames": [{"file": n, "timestamp": f.timestamp} for n, f in zip(names, seq.frames)],
        "trajectory": "groundtruth.txt",
        "trajectory_unit": "m",
        "max_gap_s": seq.max_gap,
    }
    if meta:
        manifest["config"] = meta
    (out / "manifest.json").write_text(json.dumps(manifest, indent=2, sort_keys=True))
    return out


def load_sequence(directory, trajectory: Optional[Trajectory] = None) -> RgbdSequence:
    """Read a directory written by :func:`save_sequence`."""
    d = Path(directory)
    mpath = d / "manifest.json"
    if not mpath.is_file():
        raise FileNotFoundError(f"no manifest.json in {d}")
    try:
        m = json.loads(mpath.read_text())
        cam = PinholeCamera(**m["camera"])
        entries = m["frames"]
    except (ValueError, KeyError, TypeError) as e:
        raise ParseError(f"invalid manifest: {e}") from None
    frames = []
    for e in entries:
        f = DepthFrame(read_pgm16((d / e["file"]).read_bytes()), float(e["timestamp"]))
        npath = d / e["file"].replace("depth_", "normals_").replace(".pgm", ".npy")
        if npath.is_file():
            f.normals = np.load(npath).astype(np.float64)
        frames.append(f)
    if trajectory is None:
        trajectory = parse_trajectory((d / m.get("trajectory", "groundtruth.txt")).read_text(),
                                      m.get("trajectory_unit", "m"))
    # poses come from a text round trip; match frames by index if stamps differ only in print precision
    if len(trajectory) == len(frames):
        trajectory = Trajectory(Pose(f.timestamp, p.rotation, p.translation)
                                if abs(f.timestamp - p.timestamp) < 1e-9 else p
                                for f, p in zip(frames, trajectory))
    return RgbdSequence(frames, cam, trajectory, m.get("max_gap_s", MAX_GAP_S))
