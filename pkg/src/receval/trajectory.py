"""Camera trajectory errors: per-pose rotation/translation and RMS ATE.

Trajectory files use one pose per line, ``timestamp tx ty tz qx qy qz qw``,
with ``#`` comments. Positions are held in millimetres.
"""
from __future__ import annotations

import io
import math
from dataclasses import dataclass
from typing import List, Optional, Sequence, Tuple

import numpy as np

from .errors import ContractError, DegenerateGeometryError, TrajectoryParseError
from .transform import RigidTransform, fit_rigid, quat_canonical

_UNITS = {"m": 1000.0, "mm": 1.0}


@dataclass(frozen=True)
class Pose:
    timestamp: float
    rotation: np.ndarray    # unit quaternion (w, x, y, z), w >= 0
    translation: np.ndarray  # mm

    def __post_init__(self):
        q = np.asarray(self.rotation, float).reshape(4)
        n = np.linalg.norm(q)
        if not n > 0:
            raise ContractError("pose rotation must be a non-zero quaternion")
        if abs(n - 1.0) > 1e-12:
            q = q / n
        object.__setattr__(self, "timestamp", float(self.timestamp))
        object.__setattr__(self, "rotation", quat_canonical(q))
        object.__setattr__(self, "translation", np.asarray(self.translation, float).reshape(3))

    @property
    def transform(self) -> RigidTransform:
        return RigidTransform(self.rotation, self.translation)

    @classmethod
    def from_transform(cls, timestamp, T: RigidTransform) -> "Pose":
        q = T.rotation / np.linalg.norm(T.rotation)
        return cls(float(timestamp), quat_canonical(q), T.translation.copy())


class Trajectory(list):
    """Time-ordered list of ``Pose`` with strictly increasing timestamps."""

    def __init__(self, poses=()):
        super().__init__(poses)
        ts = [p.timestamp for p in self]
        if any(b <= a for a, b in zip(ts, ts[1:])):
            raise ContractError("trajectory timestamps must be strictly increasing")

    @property
    def timestamps(self) -> np.ndarray:
        return np.array([p.timestamp for p in self], float)

    @property
    def positions(self) -> np.ndarray:
        return np.array([p.translation for p in self], float).reshape(-1, 3)

    @property
    def quaternions(self) -> np.ndarray:
        return np.array([p.rotation for p in self], float).reshape(-1, 4)

    def transformed(self, T: RigidTransform) -> "Trajectory":
        """Apply ``T`` on the world side of every pose."""
        return Trajectory(Pose.from_transform(p.timestamp, T @ p.transform) for p in self)

    def to_text(self, unit="m") -> str:
        scale = _unit(unit)
        out = io.StringIO()
        out.write("# timestamp tx ty tz qx qy qz qw\n")
        for p in self:
            t = p.translation / scale
            w, x, y, z = p.rotation
            vals = [p.timestamp, *t, x, y, z, w]
            out.write(" ".join(repr(float(v)) for v in vals) + "\n")
        return out.getvalue()


def _unit(unit):
    try:
        return _UNITS[unit]
    except KeyError:
        raise ContractError(f"unknown translation unit {unit!r}") from None


def parse_trajectory(text: str, unit: str = "m") -> Trajectory:
    """Parse ``timestamp tx ty tz qx qy qz qw`` lines into a ``Trajectory``.

    Quaternions are renormalised and sign-canonicalised (w >= 0);
    translations are converted to millimetres from ``unit``.
    """
    scale = _unit(unit)
    poses = []
    last = -math.inf
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        tok = line.replace(",", " ").split()
        if len(tok) != 8:
            raise TrajectoryParseError(f"line {lineno}: expected 8 fields, got {len(tok)}")
        try:
            vals = [float(x) for x in tok]
        except ValueError:
            raise TrajectoryParseError(f"line {lineno}: non-numeric field") from None
        if not all(math.isfinite(v) for v in vals):
            raise TrajectoryParseError(f"line {lineno}: non-finite value")
        ts, tx, ty, tz, qx, qy, qz, qw = vals
        if ts <= last:
            raise TrajectoryParseError(f"line {lineno}: timestamp {ts} not after {last}")
        last = ts
        q = np.array([qw, qx, qy, qz])
        n = np.linalg.norm(q)
        if n == 0:
            raise TrajectoryParseError(f"line {lineno}: zero quaternion")
        poses.append(Pose(ts, quat_canonical(q / n), np.array([tx, ty, tz]) * scale))
    return Trajectory(poses)


def associate(est: Sequence[Pose], gt: Sequence[Pose], max_dt: float = 0.02
              ) -> List[Tuple[Pose, Pose]]:
    """Greedy timestamp matching, closest pairs first, each pose used once.

    Pairs further apart than ``max_dt`` seconds are dropped. Ties in |dt|
    are broken by (est index, gt index) so the result is deterministic.
    """
    if not max_dt > 0:
        raise ContractError("max_dt must be positive")
    te = np.array([p.timestamp for p in est], float)
    tg = np.array([p.timestamp for p in gt], float)
    if len(te) == 0 or len(tg) == 0:
        return []
    cand = []
    # both lists are sorted, so only a window of gt around each est stamp can qualify
    lo = np.searchsorted(tg, te - max_dt, side="left")
    hi = np.searchsorted(tg, te + max_dt, side="right")
    for i in range(len(te)):
        for j in range(lo[i], hi[i]):
            dt = abs(te[i] - tg[j])
            if dt <= max_dt:
                cand.append((dt, i, j))
    cand.sort()
    used_e, used_g = set(), set()
    pairs = []
    for dt, i, j in cand:
        if i in used_e or j in used_g:
            continue
        used_e.add(i)
        used_g.add(j)
        pairs.append((i, j))
    pairs.sort()
    return [(est[i], gt[j]) for i, j in pairs]


def rotational_error(q_s, q_t) -> float:
    """Shortest-arc angle (degrees) of q_s * conj(q_t), i.e. 2 acos(|w|).

    Evaluated as 4 atan2(|a - b|, |a + b|) with b sign-aligned to a. This is
    the same angle, accurate at every magnitude, and exactly zero for q and -q.
    """
    a = np.asarray(q_s, float)
    b = np.asarray(q_t, float)
    a = a / np.linalg.norm(a)
    b = b / np.linalg.norm(b)
    if a @ b < 0:
        b = -b
    return math.degrees(4.0 * math.atan2(float(np.linalg.norm(a - b)), float(np.linalg.norm(a + b))))


def translational_error(pair: Tuple[Pose, Pose], alignment: Optional[RigidTransform] = None) -> float:
    est, gt = pair
    p = est.translation if alignment is None else alignment.apply(est.translation)
    return float(np.linalg.norm(p - gt.translation))


def align_trajectories(pairs: Sequence[Tuple[Pose, Pose]]) -> RigidTransform:
    """Least-squares rigid T minimising sum ||T p_est - p_gt||^2 (no scale)."""
    if len(pairs) < 3:
        raise DegenerateGeometryError(f"alignment needs >= 3 pose pairs, got {len(pairs)}")
    est = np.array([e.translation for e, _ in pairs])
    gt = np.array([g.translation for _, g in pairs])
    return fit_rigid(est, gt)


@dataclass
class AteResult:
    rms_ate: float
    alignment: RigidTransform
    timestamps: np.ndarray
    translational: np.ndarray      # after alignment, mm
    rotational: np.ndarray         # after alignment, degrees
    translational_raw: np.ndarray  # without alignment
    rotational_raw: np.ndarray

    @property
    def n(self):
        return len(self.timestamps)

    def to_csv(self, aligned=True) -> str:
        tr = self.translational if aligned else self.translational_raw
        rot = self.rotational if aligned else self.rotational_raw
        lines = ["index,timestamp,translational_mm,rotational_deg"]
        for i in range(self.n):
            lines.append(f"{i},{self.timestamps[i]!r},{float(tr[i])!r},{float(rot[i])!r}")
        return "\n".join(lines) + "\n"

    def summary(self) -> dict:
        return {
            "rms_ate_mm": self.rms_ate,
            "pairs": int(self.n),
            "alignment": self.alignment.to_dict(),
            "translational_mm": {"mean": _mean(self.translational), "max": _max(self.translational)},
            "rotational_deg": {"mean": _mean(self.rotational), "max": _max(self.rotational)},
        }


def _mean(x):
    return float(np.mean(x)) if len(x) else None


def _max(x):
    return float(np.max(x)) if len(x) else None


def rms_ate(est: Trajectory, gt: Trajectory, max_dt: float = 0.02) -> AteResult:
    """Associate, rigidly align, and take the RMS of translational errors."""
    pairs = associate(est, gt, max_dt)
    if len(pairs) < 3:
        raise DegenerateGeometryError(
            f"only {len(pairs)} associated poses (need >= 3); no associations within {max_dt} s"
            if pairs else f"no associations within {max_dt} s")
    T = align_trajectories(pairs)
    trans = np.array([translational_error(p, T) for p in pairs])
    trans_raw = np.array([translational_error(p) for p in pairs])
    rot_raw = np.array([rotational_error(e.rotation, g.rotation) for e, g in pairs])
    rot = np.array([rotational_error((T @ e.transform).rotation, g.rotation) for e, g in pairs])
    return AteResult(float(np.sqrt(np.mean(trans ** 2))), T,
                     np.array([e.timestamp for e, _ in pairs]), trans, rot, trans_raw, rot_raw)
