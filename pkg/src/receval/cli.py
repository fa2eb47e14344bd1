"""Command-line front end: ``receval <command> ...``.

Exit codes: 0 success, 1 usage/contract, 2 parse, 3 numerical/degenerate, 4 I/O.
"""
from __future__ import annotations

import argparse
import hashlib
import json
import logging
import math
import sys
from pathlib import Path

import numpy as np

from . import __version__
from .config import EvalConfig
from .errors import ContractError, NumericalError, ParseError, RecevalError
from .mesh import PointCloud, TriangleMesh, surface_centroid
from .meshio import read_mesh, save_mesh
from .metrics import RoiSphere, evaluate_surface, export_colormap
from .registration import register
from .stats import compare_methods
from .trajectory import Trajectory, parse_trajectory, rms_ate
from .transform import RigidTransform

EXIT_OK, EXIT_USAGE, EXIT_PARSE, EXIT_NUMERICAL, EXIT_IO = 0, 1, 2, 3, 4
MESH_SUFFIXES = {".ply", ".obj"}

log = logging.getLogger("receval")


class UsageError(RecevalError):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


# --------------------------------------------------------------------------- helpers

def _stamp(cfg: EvalConfig) -> dict:
    return {"version": __version__, "config": cfg.to_flat()}


def config_digest(cfg: EvalConfig) -> str:
    return hashlib.sha256(cfg.to_json().encode()).hexdigest()[:16]


def _write_json(path: Path, obj):
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(json.dumps(obj, indent=2, sort_keys=True, default=_json_default) + "\n")


def _json_default(o):
    if isinstance(o, np.generic):
        return o.item()
    if isinstance(o, np.ndarray):
        return o.tolist()
    raise TypeError(f"not JSON serialisable: {type(o).__name__}")


def _csv_header(cfg):
    return "# " + json.dumps(_stamp(cfg), sort_keys=True) + "\n"


def _inputs(path, suffixes):
    """A file -> {stem: file}; a directory -> all matching files keyed by stem."""
    p = Path(path)
    if p.is_dir():
        files = sorted(f for f in p.iterdir() if f.suffix.lower() in suffixes)
        if not files:
            raise FileNotFoundError(f"no {'/'.join(sorted(suffixes))} files in {p}")
        return {f.stem: f for f in files}
    if not p.exists():
        raise FileNotFoundError(f"no such file: {p}")
    return {p.stem: p}


def _pair_up(a: dict, b: dict, what):
    """Match batch inputs by stem; a single file on one side pairs with everything."""
    if len(b) == 1 and len(a) >= 1:
        (only,) = b.values()
        return {k: (v, only) for k, v in a.items()}
    if len(a) == 1 and len(b) > 1:
        (only,) = a.values()
        return {k: (only, v) for k, v in b.items()}
    missing = sorted(set(a) ^ set(b))
    if missing:
        raise UsageError(f"{what}: inputs without a partner: {', '.join(missing)}")
    return {k: (a[k], b[k]) for k in sorted(a)}


def _out_path(out, stem, suffix, batch):
    out = Path(out)
    if batch or out.is_dir() or not out.suffix:
        return out / f"{stem}{suffix}"
    return out


def _read_geometry(path, cfg):
    return read_mesh(path, cfg.mesh_unit)


def _read_target(path, cfg) -> TriangleMesh:
    m = read_mesh(path, cfg.mesh_unit)
    if not isinstance(m, TriangleMesh):
        raise ContractError(f"{path}: a reference mesh needs faces, found a point cloud")
    return m.with_normals()


def _as_cloud(geom) -> PointCloud:
    if isinstance(geom, TriangleMesh):
        return geom.with_normals().to_point_cloud() if geom.n_faces else \
            PointCloud(geom.vertices, geom.vertex_normals)
    return geom


def load_transform(path) -> RigidTransform:
    d = json.loads(Path(path).read_text())
    if "transform" in d:
        d = d["transform"]
    try:
        return RigidTransform.from_dict(d)
    except (KeyError, TypeError, ValueError) as e:
        raise ParseError(f"{path}: not a transform file ({e})") from None


# --------------------------------------------------------------------------- commands

def cmd_register(args, cfg):
    srcs = _inputs(args.source, MESH_SUFFIXES)
    tgts = _inputs(args.target, MESH_SUFFIXES)
    jobs = _pair_up(srcs, tgts, "register")
    batch = len(jobs) > 1
    params = cfg.registration_params()
    for stem, (s, t) in jobs.items():
        source = _read_geometry(s, cfg)
        target = _read_target(t, cfg)
        res = register(_as_cloud(source), target, params)
        out = _out_path(args.output, stem, ".transform.json", batch)
        _write_json(out, {"source": str(s), "target": str(t), "transform": res.transform.to_dict(),
                          "report": res.report, **_stamp(cfg)})
        print(f"{stem}: icp {res.report['icp']['stop_reason']} after "
              f"{res.report['icp']['iterations']} iterations, residual "
              f"{res.report['icp']['final_residual_mm']:.4f} mm -> {out}")
    return EXIT_OK


def cmd_surface_error(args, cfg):
    srcs = _inputs(args.source, MESH_SUFFIXES)
    tgts = _inputs(args.target, MESH_SUFFIXES)
    jobs = _pair_up(srcs, tgts, "surface-error")
    tfs = None
    if args.transform:
        tfs = _inputs(args.transform, {".json"})
        tfs = {k.removesuffix(".transform"): v for k, v in tfs.items()}
    out_dir = Path(args.output)
    for stem, (s, t) in jobs.items():
        source = _read_geometry(s, cfg)
        target = _read_target(t, cfg)
        T = RigidTransform.identity()
        if tfs is not None:
            if len(tfs) == 1:
                (tp,) = tfs.values()
            elif stem in tfs:
                tp = tfs[stem]
            else:
                raise UsageError(f"no transform for dataset {stem!r}")
            T = load_transform(tp)
        geom = source.transformed(T)
        cloud = _as_cloud(geom)
        roi = RoiSphere.around(target, cfg.roi_radius)
        rep = evaluate_surface(cloud, target, roi)
        summary = {"dataset": stem, "source": str(s), "target": str(t),
                   "transform": T.to_dict(), **rep.summary_dict(), **_stamp(cfg)}
        _write_json(out_dir / f"{stem}.summary.json", summary)
        (out_dir / f"{stem}.errors.csv").write_text(_csv_header(cfg) + rep.to_csv())
        data, _ = export_colormap(rep, geom, "distance", "ply-binary-le", _stamp(cfg))
        (out_dir / f"{stem}.distance.ply").write_bytes(data)
        data, _ = export_colormap(rep, geom, "angle", "ply-binary-le", _stamp(cfg))
        (out_dir / f"{stem}.angle.ply").write_bytes(data)
        d, a = rep.distance_summary, rep.angle_summary
        print(f"{stem}: distance {d} mm, normal deviation {a} deg "
              f"({rep.counts()['included']} of {rep.n} points included)")
    return EXIT_OK


def cmd_traj_error(args, cfg):
    ests = _inputs(args.estimate, {".txt", ".tum", ".csv"})
    gts = _inputs(args.groundtruth, {".txt", ".tum", ".csv"})
    jobs = _pair_up(ests, gts, "traj-error")
    out_dir = Path(args.output)
    for stem, (e, g) in jobs.items():
        est = parse_trajectory(Path(e).read_text(), cfg.trajectory_unit)
        gt = parse_trajectory(Path(g).read_text(), cfg.trajectory_unit)
        res = rms_ate(est, gt, cfg.max_dt)
        _write_json(out_dir / f"{stem}.ate.json",
                    {"dataset": stem, "estimate": str(e), "groundtruth": str(g),
                     **res.summary(), **_stamp(cfg)})
        (out_dir / f"{stem}.poses.csv").write_text(_csv_header(cfg) + res.to_csv(aligned=True))
        (out_dir / f"{stem}.poses_unaligned.csv").write_text(
            _csv_header(cfg) + res.to_csv(aligned=False))
        print(f"{stem}: RMS ATE {res.rms_ate:.4f} mm over {res.n} poses")
    return EXIT_OK


def synth_trajectory(cfg: EvalConfig, center) -> Trajectory:
    from .synth import circular_trajectory, orbit_pose

    s = cfg.synth
    start = -s.arc / 2.0 if s.start is None else s.start
    if s.n_frames == 1:
        return Trajectory([orbit_pose(center, s.radius, math.radians(start + s.arc / 2.0), 0.0)])
    return circular_trajectory(center, s.radius, s.arc, s.n_frames, s.frame_rate, start)


def cmd_synth(args, cfg):
    from .synth import render_sequence, save_sequence

    mesh = _read_target(args.mesh, cfg)
    center = surface_centroid(mesh)
    traj = synth_trajectory(cfg, center)
    seq = render_sequence(mesh, cfg.pinhole(), traj, normals=cfg.synth.normals,
                          color=cfg.synth.color)
    meta = {**_stamp(cfg), "mesh": str(args.mesh), "orbit_center_mm": center.tolist(),
            "config_digest": config_digest(cfg)}
    out = save_sequence(seq, args.output, meta, normals=cfg.synth.normals)
    if cfg.synth.color:
        from .synth import write_ppm
        for i, f in enumerate(seq.frames):
            (out / "color" / f"color_{i:06d}.ppm").parent.mkdir(exist_ok=True)
            (out / "color" / f"color_{i:06d}.ppm").write_bytes(write_ppm(f.color))
    print(f"wrote {len(seq)} frames to {out}")
    return EXIT_OK


def cmd_fuse(args, cfg):
    from .synth import fuse_sequence, load_sequence

    traj = None
    if args.trajectory:
        traj = parse_trajectory(Path(args.trajectory).read_text(), cfg.trajectory_unit)
    seq = load_sequence(args.sequence, None)
    if traj is not None:
        seq.trajectory = traj
    cloud = fuse_sequence(seq, traj, cfg.synth.fuse_leaf)
    out = Path(args.output)
    out.parent.mkdir(parents=True, exist_ok=True)
    save_mesh(out, cloud, meta={**_stamp(cfg), "sequence": str(args.sequence)})
    print(f"fused {len(seq)} frames into {len(cloud)} points -> {out}")
    return EXIT_OK


def _load_report(path, metric):
    """A method report: JSON {"method", "datasets": {id: summary}} or a directory of summaries."""
    p = Path(path)
    if p.is_dir():
        files = sorted(p.glob("*.json"))
        if not files:
            raise FileNotFoundError(f"no JSON summaries in {p}")
        datasets = {}
        for f in files:
            d = json.loads(f.read_text())
            datasets[d.get("dataset", f.name.split(".")[0])] = d
        method = p.name
    else:
        d = json.loads(p.read_text())
        if not isinstance(d, dict) or "datasets" not in d:
            raise ParseError(f"{p}: expected an object with a 'datasets' map")
        datasets, method = d["datasets"], d.get("method", p.stem)
    out = {}
    for k, v in datasets.items():
        out[k] = _metric_value(v, metric, f"{p}:{k}")
    return method, out


def _metric_value(v, metric, where):
    if isinstance(v, (int, float)) and not isinstance(v, bool):
        return float(v), None
    if isinstance(v, dict):
        if metric in v:
            v = v[metric]
        if isinstance(v, (int, float)):
            return float(v), None
        if isinstance(v, dict) and v.get("mean") is not None:
            return float(v["mean"]), (None if v.get("std") is None else float(v["std"]))
    raise ParseError(f"{where}: no '{metric}' mean value")


def compare_reports(reports, test="wilcoxon"):
    """reports: list of (method, {dataset: (mean, std)}). Returns a JSON-ready dict."""
    ids = [set(d) for _, d in reports]
    if any(s != ids[0] for s in ids):
        allids = set().union(*ids)
        lines = [f"{m}: missing {', '.join(sorted(allids - set(d)))}"
                 for m, d in reports if allids - set(d)]
        raise UsageError("dataset identifiers differ between reports; " + "; ".join(lines))
    names = [m for m, _ in reports]
    if len(set(names)) != len(names):
        raise UsageError(f"duplicate method names: {names}")
    keys = sorted(ids[0])
    table = {m: {k: {"mean": d[k][0], "std": d[k][1]} for k in keys} for m, d in reports}
    pairs = []
    for i in range(len(reports)):
        for j in range(i + 1, len(reports)):
            a = [reports[i][1][k][0] for k in keys]
            b = [reports[j][1][k][0] for k in keys]
            c = compare_methods(a, b, test)
            pairs.append({"a": names[i], "b": names[j], **c.to_dict()})
    return {"datasets": keys, "methods": names, "table": table, "comparisons": pairs}


def format_table(res) -> str:
    keys, names = res["datasets"], res["methods"]

    def cell(e):
        return f"{e['mean']:.3f}" + ("" if e["std"] is None else f"±{e['std']:.3f}")

    rows = [["dataset"] + names]
    for k in keys:
        rows.append([k] + [cell(res["table"][m][k]) for m in names])
    widths = [max(len(r[c]) for r in rows) for c in range(len(rows[0]))]
    lines = ["  ".join(v.ljust(w) for v, w in zip(r, widths)) for r in rows]
    lines.append("")
    for c in res["comparisons"]:
        lines.append(f"{c['a']} vs {c['b']}: {c['test']} n={c['n']} statistic={c['statistic']:.4g} "
                     f"p={c['p_value']:.4g}{' (exact)' if c['exact'] else ''}")
    return "\n".join(lines) + "\n"


def cmd_compare(args, cfg):
    if len(args.reports) < 2:
        raise UsageError("compare needs at least two reports")
    reports = [_load_report(p, args.metric) for p in args.reports]
    res = compare_reports(reports, cfg.test)
    res.update({"metric": args.metric, **_stamp(cfg)})
    text = format_table(res)
    sys.stdout.write(text)
    if args.output:
        _write_json(Path(args.output), res)
        Path(args.output).with_suffix(".txt").write_text(text)
    return EXIT_OK


def cmd_config(args, cfg):
    if args.action == "dump":
        sys.stdout.write(cfg.to_json() + "\n")
    return EXIT_OK


# --------------------------------------------------------------------------- wiring

def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="JSON file of dotted keys (see 'config dump')")
    common.add_argument("--set", action="append", default=[], metavar="KEY=VALUE",
                        help="override one config key (repeatable)")
    common.add_argument("-v", "--verbose", action="store_true")

    p = _Parser(prog="receval", description="Evaluate 3D surface reconstructions against a reference mesh.")
    p.add_argument("--version", action="version", version=f"receval {__version__}")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    s = sub.add_parser("register", parents=[common], help="rigidly align source onto target")
    s.add_argument("source", help="mesh/cloud file or directory")
    s.add_argument("target", help="reference mesh file or directory")
    s.add_argument("-o", "--output", required=True, help="transform JSON file (or directory in batch mode)")
    s.set_defaults(func=cmd_register)

    s = sub.add_parser("surface-error", parents=[common], help="distance and normal deviation")
    s.add_argument("source")
    s.add_argument("target")
    s.add_argument("-t", "--transform", help="transform JSON (file or directory) applied to the source")
    s.add_argument("-o", "--output", required=True, help="output directory")
    s.set_defaults(func=cmd_surface_error)

    s = sub.add_parser("traj-error", parents=[common], help="RMS absolute trajectory error")
    s.add_argument("estimate")
    s.add_argument("groundtruth")
    s.add_argument("-o", "--output", required=True, help="output directory")
    s.set_defaults(func=cmd_traj_error)

    s = sub.add_parser("synth", parents=[common], help="render a synthetic depth sequence")
    s.add_argument("mesh")
    s.add_argument("-o", "--output", required=True, help="sequence directory")
    s.set_defaults(func=cmd_synth)

    s = sub.add_parser("fuse", parents=[common], help="fuse a depth sequence into a point cloud")
    s.add_argument("sequence", help="sequence directory with manifest.json")
    s.add_argument("--trajectory", help="poses to use instead of the sequence ground truth")
    s.add_argument("-o", "--output", required=True, help="output PLY")
    s.set_defaults(func=cmd_fuse)

    s = sub.add_parser("compare", parents=[common], help="paired test between methods")
    s.add_argument("reports", nargs="+", help="method report JSONs or directories of summaries")
    s.add_argument("--metric", default="distance_mm",
                   help="summary key to compare (distance_mm, normal_deviation_deg, rms_ate_mm)")
    s.add_argument("-o", "--output", help="JSON output (a .txt table is written alongside)")
    s.set_defaults(func=cmd_compare)

    s = sub.add_parser("config", parents=[common], help="configuration utilities")
    s.add_argument("action", choices=["dump"])
    s.set_defaults(func=cmd_config)
    return p


def load_config(args) -> EvalConfig:
    cfg = EvalConfig()
    if args.config:
        cfg = EvalConfig.from_json(Path(args.config).read_text())
    return cfg.with_overrides(args.set)


def exit_code(exc) -> int:
    if isinstance(exc, ParseError):
        return EXIT_PARSE
    if isinstance(exc, NumericalError):
        return EXIT_NUMERICAL
    if isinstance(exc, (UnicodeDecodeError, json.JSONDecodeError)):
        return EXIT_PARSE
    if isinstance(exc, OSError):
        return EXIT_IO
    if isinstance(exc, (ContractError, UsageError)):
        return EXIT_USAGE
    return EXIT_NUMERICAL if isinstance(exc, (ArithmeticError, np.linalg.LinAlgError)) else EXIT_USAGE


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        cfg = load_config(args)
        return args.func(args, cfg)
    except (RecevalError, OSError, ValueError, ArithmeticError, np.linalg.LinAlgError) as e:
        code = exit_code(e)
        print(f"receval {args.command}: error: {e}", file=sys.stderr)
        return code


if __name__ == "__main__":
    sys.exit(main())
