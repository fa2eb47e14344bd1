#!/usr/bin/env python3
"""Write the built-in test meshes (torso phantom, sphere, hemisphere) as PLY files."""
import argparse
from pathlib import Path

from receval import shapes
from receval.meshio import save_mesh


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("out", type=Path, nargs="?", default=Path("fixtures"))
    ap.add_argument("--ascii", action="store_true")
    args = ap.parse_args()
    args.out.mkdir(parents=True, exist_ok=True)
    meshes = {
        "torso_phantom": shapes.torso_phantom(),
        "sphere": shapes.icosphere(4, radius=100.0),
        "hemisphere": shapes.hemisphere(radius=100.0),
    }
    for name, m in meshes.items():
        path = args.out / f"{name}.ply"
        save_mesh(path, m, binary=not args.ascii)
        print(f"{path}: {m.n_vertices} vertices, {m.n_faces} faces")


if __name__ == "__main__":
    main()
