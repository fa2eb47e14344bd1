"""Two-stage rigid registration of a reconstruction onto a reference mesh.

Coarse: voxel downsampling, spin-image descriptors, ratio-test matching and
RANSAC over 3-point rigid fits. Fine: point-to-plane ICP against the exact
closest point on the mesh, limited to source points inside a sphere.
"""
from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np
from numba import njit
from scipy.spatial import cKDTree

from .bvh import BvhTree, build_bvh, closest_points
from .errors import (ContractError, DegenerateGeometryError, TooFewCorrespondencesError,
                     UnderConstrainedError)
from .mesh import PointCloud, TriangleMesh, roi_sphere_center
from .metrics import RoiSphere
from .transform import RigidTransform, fit_rigid, quat_from_rotvec, quat_to_matrix

log = logging.getLogger(__name__)


# --------------------------------------------------------------------------- parameters

@dataclass
class SpinImageParams:
    width: int = 15                 # alpha bins; beta spans 2*width bins
    bin_size: Optional[float] = None  # mm; None -> 2x median spacing of the downsampled target
    support_angle_deg: float = 60.0
    bin_scale: float = 2.0

    def validate(self):
        if self.width <= 0:
            raise ContractError("spin image width must be positive")
        if self.bin_size is not None and self.bin_size <= 0:
            raise ContractError("spin image bin size must be positive")
        if not 0.0 < self.support_angle_deg <= 90.0:
            raise ContractError("support angle must lie in (0, 90] degrees")


@dataclass
class RansacParams:
    iterations: int = 1000
    inlier_threshold: float = 10.0  # mm
    confidence: float = 0.95
    ratio: float = 0.8              # descriptor ratio test


@dataclass
class IcpParams:
    max_iterations: int = 50
    rotation_tol: float = 1e-6      # rad
    translation_tol: float = 1e-3   # mm
    reject_factor: float = 10.0     # x median residual of previous iteration
    reject_bootstrap: float = 50.0  # mm, first iteration
    reject_floor: float = 1.0       # mm
    normal_angle_deg: float = 45.0
    max_condition: float = 1e8
    min_correspondences: int = 6
    max_backtracks: int = 6


@dataclass
class RegistrationParams:
    leaf: float = 10.0              # mm, coarse-stage voxel size
    roi_radius: float = 100.0       # mm, ICP sphere
    seed: int = 0
    spin: SpinImageParams = field(default_factory=SpinImageParams)
    ransac: RansacParams = field(default_factory=RansacParams)
    icp: IcpParams = field(default_factory=IcpParams)


# --------------------------------------------------------------------------- downsampling

_KEY_BITS = 21
_KEY_OFF = 1 << (_KEY_BITS - 1)


def voxel_keys(points, leaf):
    """Absolute voxel coordinates floor(p / leaf) packed into int64 keys."""
    ijk = np.floor(np.asarray(points, float) / leaf)
    if ijk.size and (np.abs(ijk).max() >= _KEY_OFF):
        raise ContractError("voxel grid exceeds 21 bits per axis; increase the leaf size")
    ijk = ijk.astype(np.int64) + _KEY_OFF
    return (ijk[:, 0] << (2 * _KEY_BITS)) | (ijk[:, 1] << _KEY_BITS) | ijk[:, 2]


class VoxelAccumulator:
    """Streaming voxel-grid reduction: running sums per occupied voxel.

    Feeding points in several batches gives the same voxels, centroids (up
    to summation order) and output order as one batch; output follows the
    first occurrence of each voxel.
    """

    def __init__(self, leaf: float, flush_rows: int = 2_000_000):
        if not leaf > 0:
            raise ContractError("leaf size must be positive")
        self.leaf = float(leaf)
        self.flush_rows = flush_rows
        self._seen = 0
        self._parts = []
        self._rows = 0

    def add(self, points, normals=None, normal_ok=None):
        points = np.asarray(points, float).reshape(-1, 3)
        n = len(points)
        if n == 0:
            return
        if normals is None:
            normals = np.zeros((n, 3))
            normal_ok = np.zeros(n, bool)
        elif normal_ok is None:
            normal_ok = np.linalg.norm(normals, axis=1) > 0
        keys = voxel_keys(points, self.leaf)
        self._parts.append(self._reduce(keys, self._seen + np.arange(n), points,
                                        np.where(normal_ok[:, None], normals, 0.0),
                                        np.ones(n)))
        self._seen += n
        self._rows += len(self._parts[-1][0])
        if self._rows > self.flush_rows:
            self._consolidate()

    @staticmethod
    def _reduce(keys, first, psum, nsum, count):
        uniq, inv = np.unique(keys, return_inverse=True)
        inv = inv.reshape(-1)
        m = len(uniq)
        f = np.full(m, np.iinfo(np.int64).max)
        np.minimum.at(f, inv, first)
        ps = np.column_stack([np.bincount(inv, psum[:, k], m) for k in range(3)])
        ns = np.column_stack([np.bincount(inv, nsum[:, k], m) for k in range(3)])
        return uniq, f, ps, ns, np.bincount(inv, count, m)

    def _consolidate(self):
        if len(self._parts) > 1:
            cat = [np.concatenate(x) for x in zip(*self._parts)]
            self._parts = [self._reduce(*cat)]
        self._rows = len(self._parts[0][0]) if self._parts else 0

    def __len__(self):
        self._consolidate()
        return self._rows

    def result(self) -> PointCloud:
        self._consolidate()
        if not self._parts:
            return PointCloud(np.zeros((0, 3)), np.zeros((0, 3)))
        _, first, ps, ns, cnt = self._parts[0]
        order = np.argsort(first, kind="stable")
        pts = ps[order] / cnt[order, None]
        ns = ns[order]
        lens = np.linalg.norm(ns, axis=1)
        good = lens > 1e-12
        normals = np.zeros_like(ns)
        normals[good] = ns[good] / lens[good, None]
        return PointCloud(pts, normals, good)


def downsample(cloud: PointCloud, leaf: float) -> PointCloud:
    """One point per occupied voxel of side ``leaf``: member centroid and mean normal.

    Output order follows the first occurrence of each voxel in the input.
    """
    acc = VoxelAccumulator(leaf)
    if cloud.normals is None:
        acc.add(cloud.points)
        out = acc.result()
        return PointCloud(out.points)
    acc.add(cloud.points, cloud.normals, cloud.normal_ok())
    return acc.result()


# --------------------------------------------------------------------------- spin images

@dataclass(frozen=True, eq=False)
class SpinImage:
    """Histogram over (alpha = radial distance, beta = signed elevation).

    ``histogram[i, j]`` is the mass at alpha = i * bin_size and
    beta = (j - width) * bin_size; contributions are split bilinearly.
    """

    basis_point: np.ndarray
    basis_normal: np.ndarray
    histogram: np.ndarray
    bin_size: float
    width: int


@njit(cache=True)
def _spin_kernel(basis, bnormals, pts, pnormals, has_normals, bin_size, width, cos_support):
    nb = basis.shape[0]
    out = np.zeros((nb, width + 1, 2 * width + 1))
    rmax2 = (width * bin_size) ** 2
    for k in range(nb):
        px, py, pz = basis[k, 0], basis[k, 1], basis[k, 2]
        nx, ny, nz = bnormals[k, 0], bnormals[k, 1], bnormals[k, 2]
        for i in range(pts.shape[0]):
            dx, dy, dz = pts[i, 0] - px, pts[i, 1] - py, pts[i, 2] - pz
            r2 = dx * dx + dy * dy + dz * dz
            if r2 >= rmax2:
                continue
            if has_normals:
                c = nx * pnormals[i, 0] + ny * pnormals[i, 1] + nz * pnormals[i, 2]
                if c < cos_support:
                    continue
            beta = nx * dx + ny * dy + nz * dz
            a2 = r2 - beta * beta
            alpha = math.sqrt(a2) if a2 > 0.0 else 0.0
            a = alpha / bin_size
            b = (beta + width * bin_size) / bin_size
            i0 = int(math.floor(a))
            j0 = int(math.floor(b))
            fa = a - i0
            fb = b - j0
            # guards only matter at the open support boundary
            if i0 >= width:
                i0, fa = width - 1, 1.0
            if j0 >= 2 * width:
                j0, fb = 2 * width - 1, 1.0
            if j0 < 0:
                j0, fb = 0, 0.0
            out[k, i0, j0] += (1 - fa) * (1 - fb)
            out[k, i0 + 1, j0] += fa * (1 - fb)
            out[k, i0, j0 + 1] += (1 - fa) * fb
            out[k, i0 + 1, j0 + 1] += fa * fb
    return out


def spin_histograms(basis_points, basis_normals, support: PointCloud, params: SpinImageParams,
                    bin_size: float) -> np.ndarray:
    """Batch spin images; returns an array (K, width + 1, 2 * width + 1)."""
    params.validate()
    basis_points = np.ascontiguousarray(np.reshape(basis_points, (-1, 3)), dtype=float)
    basis_normals = np.ascontiguousarray(np.reshape(basis_normals, (-1, 3)), dtype=float)
    pts = np.ascontiguousarray(support.points, dtype=float)
    has_n = support.normals is not None
    if has_n:
        ok = support.normal_ok()
        pts = np.ascontiguousarray(pts[ok])
        nrm = np.ascontiguousarray(support.normals[ok])
    else:
        nrm = np.zeros((1, 3))
    cos_s = math.cos(math.radians(params.support_angle_deg))
    return _spin_kernel(basis_points, basis_normals, pts, nrm, has_n, float(bin_size),
                        int(params.width), cos_s)


def compute_spin_image(basis_point, basis_normal, support: PointCloud,
                       params: SpinImageParams) -> SpinImage:
    bn = np.asarray(basis_normal, float)
    if abs(np.linalg.norm(bn) - 1.0) > 1e-6:
        raise ContractError("basis normal must be unit length")
    if params.bin_size is None:
        raise ContractError("compute_spin_image needs an explicit bin size")
    h = spin_histograms(basis_point, bn, support, params, params.bin_size)[0]
    return SpinImage(np.asarray(basis_point, float), bn, h, float(params.bin_size), params.width)


# --------------------------------------------------------------------------- matching

@dataclass(frozen=True, eq=False)
class CorrespondenceSet:
    source: np.ndarray
    target: np.ndarray
    distance: np.ndarray

    def __post_init__(self):
        s = np.asarray(self.source, np.int64)
        if len(np.unique(s)) != len(s):
            raise ContractError("duplicate source index in correspondence set")
        object.__setattr__(self, "source", s)
        object.__setattr__(self, "target", np.asarray(self.target, np.int64))
        object.__setattr__(self, "distance", np.asarray(self.distance, float))

    def __len__(self):
        return len(self.source)


def correlation_distance_matrix(A, B):
    """1 - Pearson correlation between rows of A and rows of B."""
    def standardise(X):
        X = X.reshape(len(X), -1).astype(float)
        X = X - X.mean(axis=1, keepdims=True)
        n = np.linalg.norm(X, axis=1, keepdims=True)
        return np.divide(X, n, out=np.zeros_like(X), where=n > 0)
    # rounding can push identical descriptors slightly below zero, which would defeat the ratio test
    return np.clip(1.0 - standardise(A) @ standardise(B).T, 0.0, 2.0)


def match_descriptors(A, B, ratio=0.8) -> CorrespondenceSet:
    if len(A) == 0 or len(B) == 0:
        raise TooFewCorrespondencesError("empty descriptor list")
    if A.shape[1:] != B.shape[1:]:
        raise ContractError("descriptor geometry differs between source and target")
    D = correlation_distance_matrix(A, B)
    if D.shape[1] < 2:
        j = np.zeros(len(A), np.int64)
        return CorrespondenceSet(np.arange(len(A)), j, D[:, 0])
    two = np.argpartition(D, 1, axis=1)[:, :2]
    d2 = np.take_along_axis(D, two, axis=1)
    swap = d2[:, 0] > d2[:, 1]
    two[swap] = two[swap][:, ::-1]
    d2[swap] = d2[swap][:, ::-1]
    best, second = d2[:, 0], d2[:, 1]
    # exact ties fail the ratio test, so the partition order of tied columns never matters
    keep = best < ratio * second
    src = np.flatnonzero(keep)
    return CorrespondenceSet(src, two[keep, 0], best[keep])


def match_spin_images(src: Sequence[SpinImage], tgt: Sequence[SpinImage], ratio=0.8):
    """Nearest target per source by correlation distance, filtered by a ratio test."""
    if not src or not tgt:
        raise TooFewCorrespondencesError("empty descriptor list")
    if {(s.width, s.bin_size) for s in src} != {(t.width, t.bin_size) for t in tgt}:
        raise ContractError("spin images have differing histogram geometry")
    return match_descriptors(np.stack([s.histogram for s in src]),
                             np.stack([t.histogram for t in tgt]), ratio)


# --------------------------------------------------------------------------- RANSAC

@dataclass
class RobustFit:
    transform: RigidTransform
    inliers: np.ndarray          # positions into the canonically ordered correspondence list
    pairs: np.ndarray            # (K, 2) canonical (source, target) index pairs
    hypotheses: int


def estimate_rigid_robust(corrs: CorrespondenceSet, src_points, tgt_points, iterations=1000,
                          inlier_threshold=10.0, confidence=0.95, seed=0) -> RobustFit:
    """RANSAC over minimal 3-point samples with a closed-form rigid fit.

    Correspondences are put in canonical (source, target) order first, so the
    result does not depend on the input order for a given seed.
    """
    pairs = np.unique(np.column_stack([corrs.source, corrs.target]), axis=0)
    n = len(pairs)
    if n < 3:
        raise TooFewCorrespondencesError(f"need >= 3 correspondences, got {n}")
    S = np.asarray(src_points, float)[pairs[:, 0]]
    D = np.asarray(tgt_points, float)[pairs[:, 1]]
    sv = np.linalg.svd(S - S.mean(axis=0), compute_uv=False)
    if sv[0] == 0 or sv[1] <= 1e-9 * sv[0]:
        raise DegenerateGeometryError("all correspondences are collinear; no valid 3-point sample")

    rng = np.random.default_rng(seed)
    best_count, best_err, best_T = 0, np.inf, None
    limit = iterations
    k = 0
    while k < limit:
        k += 1
        idx = rng.choice(n, 3, replace=False)
        try:
            T = fit_rigid(S[idx], D[idx])
        except DegenerateGeometryError:
            continue
        res = np.linalg.norm(T.apply(S) - D, axis=1)
        inl = res < inlier_threshold
        c = int(inl.sum())
        err = float(res[inl].sum())
        if c > best_count or (c == best_count and err < best_err):
            best_count, best_err, best_T = c, err, T
            w = c / n
            if w >= 1.0:
                break
            p_good = w ** 3
            if p_good > 0:
                need = math.log(1 - confidence) / math.log(1 - p_good)
                limit = min(iterations, max(int(math.ceil(need)), 1))
    if best_T is None or best_count < 3:
        raise DegenerateGeometryError("no RANSAC hypothesis reached 3 inliers")
    inl = np.flatnonzero(np.linalg.norm(best_T.apply(S) - D, axis=1) < inlier_threshold)
    T = fit_rigid(S[inl], D[inl])
    return RobustFit(T, inl, pairs, k)


# --------------------------------------------------------------------------- ICP

@dataclass
class IcpResult:
    transform: RigidTransform
    residuals: list          # monotone (best-so-far) RMS point-to-plane residual, mm
    raw_residuals: list      # residual measured at the start of each iteration
    iterations: int
    converged: bool
    stop_reason: str
    n_correspondences: int


def _interp_normals(mesh, faces, bary):
    vn = mesh.vertex_normals[mesh.faces[faces]]  # (n, 3, 3)
    n = np.einsum("ij,ijk->ik", bary, vn)
    lens = np.linalg.norm(n, axis=1, keepdims=True)
    return np.divide(n, lens, out=np.zeros_like(n), where=lens > 0)


class _Matcher:
    def __init__(self, source, target, bvh, roi, params):
        self.src = source.points
        self.src_n = source.normals if source.has_normals else None
        self.src_ok = source.normal_ok() if source.has_normals else None
        self.target = target
        self.bvh = bvh
        self.roi = roi
        self.cos_max = math.cos(math.radians(params.normal_angle_deg))

    def __call__(self, T: RigidTransform, thresh):
        X = T.apply(self.src)
        inside = np.flatnonzero(np.linalg.norm(X - self.roi.center, axis=1) <= self.roi.radius)
        f, q, w, d = closest_points(self.bvh, X[inside])
        nq = _interp_normals(self.target, f, w)
        keep = d <= thresh
        keep &= np.linalg.norm(nq, axis=1) > 0
        if self.src_n is not None:
            ns = T.apply_vectors(self.src_n[inside])
            compat = np.einsum("ij,ij->i", ns, nq) >= self.cos_max
            keep &= compat | ~self.src_ok[inside]
        x, q, nq = X[inside[keep]], q[keep], nq[keep]
        r = np.einsum("ij,ij->i", x - q, nq)
        rms = float(np.sqrt(np.mean(r * r))) if len(r) else np.inf
        return x, q, nq, r, rms, (np.median(d) if len(d) else np.inf)


def point_to_plane_system(x, n, r):
    """Normal equations of the linearised point-to-plane problem.

    Rotation is parameterised about the centroid of ``x`` and scaled by the
    RMS radius so the condition number reflects geometry, not units.
    Returns (A, g, mu, s).
    """
    mu = x.mean(axis=0)
    s = float(np.sqrt(np.mean(np.sum((x - mu) ** 2, axis=1))))
    s = s if s > 0 else 1.0
    J = np.hstack([np.cross((x - mu) / s, n), n])
    return J.T @ J, J.T @ r, mu, s


def condition_number(A) -> float:
    ev = np.linalg.eigvalsh(A)
    if ev[0] <= 0:
        return np.inf
    return float(ev[-1] / ev[0])


def icp_point_to_plane(source: PointCloud, target: TriangleMesh, bvh: Optional[BvhTree] = None,
                       init: Optional[RigidTransform] = None, roi: Optional[RoiSphere] = None,
                       params: Optional[IcpParams] = None) -> IcpResult:
    """Point-to-plane ICP limited to source points inside ``roi``.

    Each step solves the 6x6 linearised system and is accepted only if it
    does not increase the RMS residual (step halving otherwise), so the
    returned residual history is non-increasing.
    """
    params = params or IcpParams()
    if target.vertex_normals is None:
        raise ContractError("ICP target needs vertex normals")
    bvh = bvh or build_bvh(target)
    T = init or RigidTransform.identity()
    if roi is None:
        roi = RoiSphere(roi_sphere_center(target), 100.0)
    match = _Matcher(source, target, bvh, roi, params)

    thresh = params.reject_bootstrap
    residuals, raw = [], []
    converged, reason = False, "max-iterations"
    n_corr = 0
    it = 0
    for it in range(1, params.max_iterations + 1):
        x, q, nq, r, rms, med = match(T, thresh)
        n_corr = len(x)
        if n_corr < params.min_correspondences:
            raise TooFewCorrespondencesError(
                f"ICP iteration {it}: {n_corr} correspondences inside the ROI "
                f"(need {params.min_correspondences})")
        raw.append(rms)
        residuals.append(min(rms, residuals[-1]) if residuals else rms)
        A, g, mu, s = point_to_plane_system(x, nq, r)
        cond = condition_number(A)
        if cond > params.max_condition:
            raise UnderConstrainedError(
                f"point-to-plane system is rank deficient (condition number {cond:.3g}); "
                "some rotations/translations are unobservable for this geometry")
        delta = -np.linalg.solve(A, g)
        omega, u = delta[:3] / s, delta[3:]

        step = 1.0
        accepted = None
        for _ in range(params.max_backtracks + 1):
            Ri = quat_to_matrix(quat_from_rotvec(step * omega))
            ti = mu + step * u - Ri @ mu
            Tn = RigidTransform.from_rt(Ri, ti) @ T
            _, _, _, _, rms_n, _ = match(Tn, thresh)
            if rms_n <= rms * (1 + 1e-12) + 1e-15:
                accepted = (Tn, Ri, ti)
                break
            step *= 0.5
        if accepted is None:
            converged, reason = True, "no-descent"
            break
        T, Ri, ti = accepted
        rot = np.linalg.norm(step * omega)
        trans = np.linalg.norm(ti)
        # rejection for the next iteration adapts to the current residual level
        thresh = max(params.reject_factor * med, params.reject_floor)
        if rot < params.rotation_tol and trans < params.translation_tol:
            converged, reason = True, "delta"
            break
    x, q, nq, r, rms, _ = match(T, thresh)
    raw.append(rms)
    residuals.append(min(rms, residuals[-1]))
    return IcpResult(T, residuals, raw, it, converged, reason, len(x))


# --------------------------------------------------------------------------- full cascade

@dataclass
class RegistrationResult:
    transform: RigidTransform
    report: dict


def _as_cloud(x) -> PointCloud:
    if isinstance(x, TriangleMesh):
        return x.with_normals().to_point_cloud()
    return x


def median_spacing(points) -> float:
    if len(points) < 2:
        return 0.0
    d, _ = cKDTree(points).query(points, k=2)
    return float(np.median(d[:, 1]))


def observability(target: TriangleMesh, roi: RoiSphere) -> float:
    """Condition number of the point-to-plane system of the target with itself."""
    v = target.vertices
    inside = np.linalg.norm(v - roi.center, axis=1) <= roi.radius
    if inside.sum() < 6:
        inside[:] = True
    A, _, _, _ = point_to_plane_system(v[inside], target.vertex_normals[inside],
                                       np.zeros(int(inside.sum())))
    return condition_number(A)


def register(source, target: TriangleMesh, params: Optional[RegistrationParams] = None,
             bvh: Optional[BvhTree] = None) -> RegistrationResult:
    """Spin-image + RANSAC coarse alignment followed by point-to-plane ICP.

    Returns the transform mapping ``source`` into the target frame and a
    per-stage report (counts, inlier ratio, residuals).
    """
    params = params or RegistrationParams()
    src = _as_cloud(source)
    if len(src) == 0 or target.n_faces == 0:
        raise ContractError("register needs non-empty source and target")
    target = target.with_normals()
    bvh = bvh or build_bvh(target)
    roi = RoiSphere(roi_sphere_center(target), params.roi_radius)
    report = {"roi": roi.to_dict()}
    # a target whose point-to-plane system is singular (sphere, plane, cylinder)
    # admits a continuum of equally good poses; say so instead of picking one
    cond = observability(target, roi)
    report["observability_condition"] = cond
    if cond > params.icp.max_condition:
        raise UnderConstrainedError(
            f"target geometry inside the ROI is degenerate (condition number {cond:.3g}): "
            "some rotations/translations leave it unchanged, so the pose is not identifiable")

    src_ds = downsample(src, params.leaf)
    tgt_ds = downsample(target.to_point_cloud(), params.leaf)
    src_ds = src_ds.subset(src_ds.normal_ok())
    tgt_ds = tgt_ds.subset(tgt_ds.normal_ok())
    spin = params.spin
    bin_size = spin.bin_size or spin.bin_scale * median_spacing(tgt_ds.points)
    if bin_size <= 0:
        raise DegenerateGeometryError("downsampled target has no spacing to derive a bin size")
    report["downsample"] = {"leaf_mm": params.leaf, "source_points": len(src_ds),
                            "target_points": len(tgt_ds)}
    hs = spin_histograms(src_ds.points, src_ds.normals, src_ds, spin, bin_size)
    ht = spin_histograms(tgt_ds.points, tgt_ds.normals, tgt_ds, spin, bin_size)
    report["spin_images"] = {"bin_size_mm": bin_size, "width": spin.width,
                             "support_angle_deg": spin.support_angle_deg}

    corrs = match_descriptors(hs, ht, params.ransac.ratio)
    report["matching"] = {"correspondences": len(corrs), "ratio": params.ransac.ratio}
    fit = estimate_rigid_robust(corrs, src_ds.points, tgt_ds.points,
                                params.ransac.iterations, params.ransac.inlier_threshold,
                                params.ransac.confidence, params.seed)
    report["ransac"] = {"hypotheses": fit.hypotheses, "inliers": int(len(fit.inliers)),
                        "inlier_ratio": len(fit.inliers) / max(len(fit.pairs), 1),
                        "transform": fit.transform.to_dict()}

    icp = icp_point_to_plane(src, target, bvh, fit.transform, roi, params.icp)
    report["icp"] = {"iterations": icp.iterations, "converged": icp.converged,
                     "stop_reason": icp.stop_reason, "correspondences": icp.n_correspondences,
                     "final_residual_mm": icp.residuals[-1], "residuals_mm": icp.residuals}
    return RegistrationResult(icp.transform, report)
