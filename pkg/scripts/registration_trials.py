#!/usr/bin/env python3
"""Seeded register() trials on the torso phantom under random y-rotations."""
import argparse
import math
import time

import numpy as np

from receval import shapes
from receval.bvh import build_bvh
from receval.registration import RegistrationParams, register
from receval.transform import RigidTransform, quat_from_axis_angle, rotation_angle


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--trials", type=int, default=20)
    ap.add_argument("--seed", type=int, default=0)
    ap.add_argument("--samples", type=int, default=20_000)
    ap.add_argument("--max-angle", type=float, default=180.0)
    args = ap.parse_args()

    mesh = shapes.torso_phantom()
    bvh = build_bvh(mesh)
    rng = np.random.default_rng(args.seed)
    n_ok = 0
    for i in range(args.trials):
        deg = rng.uniform(-args.max_angle, args.max_angle)
        g = RigidTransform(quat_from_axis_angle([0, 1, 0], math.radians(deg)), rng.uniform(-100, 100, 3))
        src = shapes.sample_surface(mesh, args.samples, args.seed + i).transformed(g)
        t0 = time.perf_counter()
        res = register(src, mesh, RegistrationParams(seed=args.seed + i), bvh)
        E = res.transform @ g
        rot, trans = math.degrees(rotation_angle(E.R)), np.linalg.norm(E.translation)
        ok = rot < 0.5 and trans < 1.0
        n_ok += ok
        print(f"trial {i:2d}: y {deg:8.2f} deg -> error {rot:.2e} deg / {trans:.2e} mm "
              f"({res.report['ransac']['inliers']} inliers, {time.perf_counter() - t0:.1f} s)"
              f"{'' if ok else '  FAILED'}")
    print(f"{n_ok}/{args.trials} recovered")


if __name__ == "__main__":
    main()
