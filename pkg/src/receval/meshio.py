"""PLY (ASCII, binary little-endian) and OBJ (v/vn/f) codecs.

Parsing is total: any input either decodes or raises a ``MeshParseError``
subclass naming the byte offset (binary) or line number (text).
"""
from __future__ import annotations

import json
import warnings
from pathlib import Path

import numpy as np

from .errors import (FaceIndexError, MalformedHeaderError, MeshParseError, TruncatedBodyError,
                     UnsupportedFormatError, ContractError)
from .mesh import PointCloud, TriangleMesh

FORMATS = ("ply-ascii", "ply-binary-le", "obj")
SCALAR_NAME = "quality"

_PLY_TYPES = {
    "char": "i1", "int8": "i1", "uchar": "u1", "uint8": "u1",
    "short": "i2", "int16": "i2", "ushort": "u2", "uint16": "u2",
    "int": "i4", "int32": "i4", "uint": "u4", "uint32": "u4",
    "float": "f4", "float32": "f4", "double": "f8", "float64": "f8",
}
_UNIT_SCALE = {"mm": 1.0, "m": 1000.0}


class MeshFormatWarning(UserWarning):
    """Unknown content that the reader skipped."""


def _unit_scale(unit):
    try:
        return _UNIT_SCALE[unit]
    except KeyError:
        raise ContractError(f"unknown unit {unit!r}; expected 'mm' or 'm'") from None


# --------------------------------------------------------------------------- PLY

class _Element:
    def __init__(self, name, count, line):
        self.name = name
        self.count = count
        self.line = line
        self.props = []  # (name, dtype) or (name, count_dtype, item_dtype)

    @property
    def scalar_only(self):
        return all(len(p) == 2 for p in self.props)


def _parse_ply_header(data: bytes):
    if not data.startswith(b"ply"):
        raise MalformedHeaderError("missing 'ply' magic", 0)
    end = data.find(b"end_header")
    if end < 0:
        raise MalformedHeaderError("no 'end_header' line", len(data))
    nl = data.find(b"\n", end)
    if nl < 0:
        # header must be terminated even when the body is empty
        raise MalformedHeaderError("'end_header' not newline-terminated", end)
    body_start = nl + 1
    try:
        text = data[:end].decode("ascii")
    except UnicodeDecodeError as e:
        raise MalformedHeaderError("non-ASCII byte in header", e.start) from None

    fmt = None
    elements = []
    comments = []
    for lineno, raw in enumerate(text.splitlines(), start=1):
        tok = raw.split()
        if not tok or lineno == 1:
            if lineno == 1 and raw.strip() != "ply":
                raise MalformedHeaderError("first line must be 'ply'", 1, "line")
            continue
        key = tok[0]
        if key in ("comment", "obj_info"):
            comments.append(raw[len(key):].strip())
        elif key == "format":
            if len(tok) != 3:
                raise MalformedHeaderError("bad format line", lineno, "line")
            fmt = tok[1]
            if fmt not in ("ascii", "binary_little_endian", "binary_big_endian"):
                raise MalformedHeaderError(f"unknown format {fmt!r}", lineno, "line")
        elif key == "element":
            if len(tok) != 3:
                raise MalformedHeaderError("bad element line", lineno, "line")
            try:
                count = int(tok[2])
            except ValueError:
                raise MalformedHeaderError(f"non-integer element count {tok[2]!r}", lineno,
                                           "line") from None
            if count < 0:
                raise MalformedHeaderError("negative element count", lineno, "line")
            elements.append(_Element(tok[1], count, lineno))
        elif key == "property":
            if not elements:
                raise MalformedHeaderError("property before any element", lineno, "line")
            if len(tok) >= 2 and tok[1] == "list":
                if len(tok) != 5 or tok[2] not in _PLY_TYPES or tok[3] not in _PLY_TYPES:
                    raise MalformedHeaderError("bad list property", lineno, "line")
                if _PLY_TYPES[tok[2]][0] == "f":
                    raise MalformedHeaderError("list count type must be integral", lineno, "line")
                elements[-1].props.append((tok[4], _PLY_TYPES[tok[2]], _PLY_TYPES[tok[3]]))
            else:
                if len(tok) != 3 or tok[1] not in _PLY_TYPES:
                    raise MalformedHeaderError("bad property line", lineno, "line")
                elements[-1].props.append((tok[2], _PLY_TYPES[tok[1]]))
        else:
            raise MalformedHeaderError(f"unexpected header keyword {key!r}", lineno, "line")
    if fmt is None:
        raise MalformedHeaderError("missing format line", None)
    return fmt, elements, comments, body_start, text.count("\n") + 2


def _read_binary(data, elements, pos):
    """Decode each element into dict name -> {prop: array}."""
    out = {}
    for el in elements:
        if el.scalar_only:
            dt = np.dtype([(p[0] if p[0] else f"_{i}", "<" + p[1]) for i, p in enumerate(el.props)])
            need = dt.itemsize * el.count
            if pos + need > len(data):
                raise TruncatedBodyError(
                    f"element {el.name!r} needs {need} bytes, {len(data) - pos} available", pos)
            arr = np.frombuffer(data, dtype=dt, count=el.count, offset=pos)
            out[el.name] = ({p[0]: arr[dt.names[i]] for i, p in enumerate(el.props)},
                            pos + dt.itemsize * np.arange(el.count))
            pos += need
            continue
        # elements with list properties: try the fixed-length fast path first
        cols, pos = _read_binary_lists(data, el, pos)
        out[el.name] = cols
    return out, pos


def _read_binary_lists(data, el, pos):
    if el.count == 0:
        return ({p[0]: [] for p in el.props}, np.zeros(0, np.int64)), pos
    # probe the count of each list in the first record to guess a fixed layout
    fields = []
    probe = pos
    for p in el.props:
        if len(p) == 2:
            fields.append((p[0], "<" + p[1]))
            probe += np.dtype(p[1]).itemsize
        else:
            csz = np.dtype(p[1]).itemsize
            if probe + csz > len(data):
                raise TruncatedBodyError(f"element {el.name!r} truncated", probe)
            n = int(np.frombuffer(data, "<" + p[1], 1, probe)[0])
            if n < 0:
                raise MeshParseError(f"negative list length in {el.name!r}", probe)
            fields.append((p[0] + "#n", "<" + p[1]))
            fields.append((p[0], "<" + p[2], (n,)))
            probe += csz + n * np.dtype(p[2]).itemsize
    dt = np.dtype(fields)
    if pos + dt.itemsize * el.count <= len(data):
        arr = np.frombuffer(data, dtype=dt, count=el.count, offset=pos)
        ok = True
        for f in fields:
            if f[0].endswith("#n"):
                n_expect = dt.fields[f[0][:-2]][0].shape[0]
                if np.any(arr[f[0]] != n_expect):
                    ok = False
                    break
        if ok:
            cols = {p[0]: np.array(arr[p[0]]) for p in el.props}
            return (cols, pos + dt.itemsize * np.arange(el.count)), pos + dt.itemsize * el.count
    # variable-length lists: walk record by record
    cols = {p[0]: [] for p in el.props}
    offsets = []
    for _ in range(el.count):
        offsets.append(pos)
        for p in el.props:
            if len(p) == 2:
                sz = np.dtype(p[1]).itemsize
                if pos + sz > len(data):
                    raise TruncatedBodyError(f"element {el.name!r} truncated", pos)
                cols[p[0]].append(np.frombuffer(data, "<" + p[1], 1, pos)[0])
                pos += sz
            else:
                csz = np.dtype(p[1]).itemsize
                if pos + csz > len(data):
                    raise TruncatedBodyError(f"element {el.name!r} truncated", pos)
                n = int(np.frombuffer(data, "<" + p[1], 1, pos)[0])
                pos += csz
                isz = np.dtype(p[2]).itemsize
                if n < 0:
                    raise MeshParseError(f"negative list length in {el.name!r}", pos - csz)
                if pos + n * isz > len(data):
                    raise TruncatedBodyError(f"element {el.name!r} truncated", pos)
                cols[p[0]].append(np.frombuffer(data, "<" + p[2], n, pos))
                pos += n * isz
    return (cols, np.array(offsets)), pos


def _read_ascii(data, elements, body_start, first_line):
    try:
        text = data[body_start:].decode("ascii")
    except UnicodeDecodeError as e:
        raise MeshParseError("non-ASCII byte in body", body_start + e.start) from None
    lines = text.splitlines()
    # skip blank lines but remember original numbering
    numbered = [(i + first_line, ln) for i, ln in enumerate(lines) if ln.strip()]
    out = {}
    k = 0
    for el in elements:
        if k + el.count > len(numbered):
            last = numbered[-1][0] if numbered else first_line
            raise TruncatedBodyError(
                f"element {el.name!r} declares {el.count} records, "
                f"{len(numbered) - k} remain", last, "line")
        chunk = numbered[k:k + el.count]
        k += el.count
        if el.scalar_only:
            nprop = len(el.props)
            toks = [ln.split() for _, ln in chunk]
            for (lineno, _), t in zip(chunk, toks):
                if len(t) != nprop:
                    raise MeshParseError(f"expected {nprop} values, got {len(t)}", lineno, "line")
            try:
                arr = np.array(toks, dtype=float).reshape(el.count, nprop)
            except ValueError:
                for (lineno, _), t in zip(chunk, toks):
                    try:
                        [float(x) for x in t]
                    except ValueError:
                        raise MeshParseError("non-numeric value", lineno, "line") from None
                raise
            out[el.name] = ({p[0]: arr[:, i] for i, p in enumerate(el.props)},
                            np.array([c[0] for c in chunk]))
            continue
        cols = {p[0]: [] for p in el.props}
        for lineno, ln in chunk:
            t = ln.split()
            j = 0
            try:
                for p in el.props:
                    if len(p) == 2:
                        cols[p[0]].append(float(t[j]))
                        j += 1
                    else:
                        n = int(t[j])
                        if n < 0:
                            raise ValueError
                        vals = t[j + 1:j + 1 + n]
                        if len(vals) != n:
                            raise IndexError
                        cols[p[0]].append(np.array([int(v) for v in vals], dtype=np.int64))
                        j += 1 + n
            except (ValueError, IndexError):
                raise MeshParseError(f"malformed {el.name!r} record", lineno, "line") from None
            if j != len(t):
                raise MeshParseError(f"trailing values in {el.name!r} record", lineno, "line")
        out[el.name] = (cols, np.array([c[0] for c in chunk]))
    return out


def _triangulate(polys, where, kind):
    """Fan-triangulate index lists; returns (M,3) int64 and per-face source positions."""
    tris, locs = [], []
    for poly, loc in zip(polys, where):
        poly = np.asarray(poly, dtype=np.int64)
        if len(poly) < 3:
            warnings.warn(f"skipping face with {len(poly)} vertices", MeshFormatWarning)
            continue
        for i in range(1, len(poly) - 1):
            tris.append((poly[0], poly[i], poly[i + 1]))
            locs.append(loc)
    if not tris:
        return np.zeros((0, 3), np.int64), np.zeros(0, np.int64)
    return np.array(tris, dtype=np.int64), np.array(locs)


def _finish(vertices, normals, colors, faces, locs, kind, scalars, unit):
    n = len(vertices)
    if len(faces):
        bad = np.flatnonzero((faces < 0).any(axis=1) | (faces >= n).any(axis=1))
        if len(bad):
            f = bad[0]
            raise FaceIndexError(
                f"face index out of range (vertex count {n}): {faces[f].tolist()}",
                int(locs[f]), kind)
        degenerate = ((faces[:, 0] == faces[:, 1]) | (faces[:, 1] == faces[:, 2])
                      | (faces[:, 0] == faces[:, 2]))
        if degenerate.any():
            warnings.warn(f"dropping {int(degenerate.sum())} faces with repeated indices",
                          MeshFormatWarning)
            faces = faces[~degenerate]
    vertices = np.asarray(vertices, float) * _unit_scale(unit)
    if not np.all(np.isfinite(vertices)):
        raise MeshParseError("non-finite vertex coordinate", None)
    if normals is not None:
        normals = np.asarray(normals, float)
        lens = np.linalg.norm(normals, axis=1, keepdims=True)
        ok = np.isfinite(lens[:, 0]) & (lens[:, 0] > 1e-12)
        # already-unit normals are kept bit-exact so write/load round trips are lossless
        fix = ok & (np.abs(lens[:, 0] - 1.0) > 1e-12)
        normals = np.where(fix[:, None], normals / np.where(fix[:, None], lens, 1.0), normals)
        normals = np.where(ok[:, None], normals, 0.0)
    if len(faces):
        return TriangleMesh(vertices, faces, normals, colors, scalars)
    valid = None if normals is None else np.linalg.norm(normals, axis=1) > 0
    return PointCloud(vertices, normals, valid, scalars)


_KNOWN_VERTEX = {"x", "y", "z", "nx", "ny", "nz", "red", "green", "blue", SCALAR_NAME}


def _load_ply(data: bytes, declared, unit):
    fmt, elements, comments, body_start, first_line = _parse_ply_header(data)
    if fmt == "binary_big_endian":
        raise MalformedHeaderError("big-endian PLY is not supported", None)
    actual = "ply-ascii" if fmt == "ascii" else "ply-binary-le"
    if declared not in (None, "ply", actual):
        raise MalformedHeaderError(f"declared {declared} but header says {fmt}", None)
    names = [e.name for e in elements]
    if "vertex" not in names:
        raise MalformedHeaderError("no vertex element", None)
    vel = elements[names.index("vertex")]
    vprops = [p[0] for p in vel.props]
    for req in ("x", "y", "z"):
        if req not in vprops:
            raise MalformedHeaderError(f"vertex element lacks property {req!r}", vel.line, "line")
    for p in vel.props:
        if len(p) != 2:
            raise MalformedHeaderError("list property on vertex element", vel.line, "line")
        if p[0] not in _KNOWN_VERTEX:
            warnings.warn(f"ignoring vertex property {p[0]!r}", MeshFormatWarning)
    for e in elements:
        if e.name not in ("vertex", "face"):
            warnings.warn(f"ignoring element {e.name!r}", MeshFormatWarning)

    if fmt == "ascii":
        decoded = _read_ascii(data, elements, body_start, first_line)
        kind = "line"
    else:
        decoded, _ = _read_binary(data, elements, body_start)
        kind = "byte"

    vcols = decoded["vertex"][0]
    verts = np.stack([np.asarray(vcols[c], float) for c in "xyz"], axis=1) if vel.count else \
        np.zeros((0, 3))
    normals = None
    if all(c in vcols for c in ("nx", "ny", "nz")):
        normals = np.stack([np.asarray(vcols[c], float) for c in ("nx", "ny", "nz")], axis=1) \
            if vel.count else np.zeros((0, 3))
    colors = None
    if all(c in vcols for c in ("red", "green", "blue")):
        cols = np.stack([np.asarray(vcols[c], float) for c in ("red", "green", "blue")], axis=1)
        if cols.size and (cols.min() < 0 or cols.max() > 255):
            raise MeshParseError("vertex colour outside 0..255", None)
        colors = cols.astype(np.uint8).reshape(-1, 3)
    scalars = {}
    if SCALAR_NAME in vcols:
        scalars[SCALAR_NAME] = np.asarray(vcols[SCALAR_NAME], float).copy()

    faces = np.zeros((0, 3), np.int64)
    locs = np.zeros(0, np.int64)
    if "face" in decoded:
        fel = elements[names.index("face")]
        fcols, where = decoded["face"]
        listprops = [p for p in fel.props if len(p) == 3]
        key = next((p[0] for p in listprops if p[0] in ("vertex_indices", "vertex_index")), None)
        if key is None:
            raise MalformedHeaderError("face element lacks vertex_indices list", fel.line, "line")
        for p in fel.props:
            if p[0] != key:
                warnings.warn(f"ignoring face property {p[0]!r}", MeshFormatWarning)
        polys = fcols[key]
        if isinstance(polys, np.ndarray) and polys.ndim == 2 and polys.shape[1] == 3:
            faces, locs = polys.astype(np.int64), np.asarray(where)
        elif len(polys):
            faces, locs = _triangulate(polys, where, kind)
    return _finish(verts, normals, colors, faces, locs, kind, scalars, unit), comments


# --------------------------------------------------------------------------- OBJ

def _load_obj(data: bytes, unit):
    try:
        text = data.decode("utf-8")
    except UnicodeDecodeError as e:
        raise MeshParseError("invalid UTF-8", e.start) from None
    v, vn, polys, ploc, corner_n = [], [], [], [], []
    warned = set()
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        tok = line.split()
        key = tok[0]
        try:
            if key == "v":
                if len(tok) not in (4, 5, 7):
                    raise ValueError
                v.append([float(x) for x in tok[1:4]])
            elif key == "vn":
                if len(tok) != 4:
                    raise ValueError
                vn.append([float(x) for x in tok[1:4]])
            elif key == "f":
                if len(tok) < 4:
                    raise ValueError
                idx, nidx = [], []
                for corner in tok[1:]:
                    parts = corner.split("/")
                    if len(parts) > 3 or not parts[0]:
                        raise ValueError
                    i = int(parts[0])
                    if i == 0:
                        raise FaceIndexError("OBJ index 0 is invalid", lineno, "line")
                    idx.append(i - 1 if i > 0 else len(v) + i)
                    if len(parts) == 3 and parts[2]:
                        j = int(parts[2])
                        if j == 0:
                            raise FaceIndexError("OBJ normal index 0 is invalid", lineno, "line")
                        j = j - 1 if j > 0 else len(vn) + j
                        if not 0 <= j < len(vn):
                            raise FaceIndexError("normal index out of range", lineno, "line")
                        nidx.append(j)
                    else:
                        nidx.append(-1)
                polys.append(idx)
                ploc.append(lineno)
                corner_n.append(nidx)
            else:
                if key not in warned:
                    warned.add(key)
                    warnings.warn(f"ignoring OBJ record {key!r}", MeshFormatWarning)
        except ValueError:
            raise MeshParseError(f"malformed {key!r} record", lineno, "line") from None
    verts = np.array(v, float).reshape(-1, 3)
    normals = None
    if vn:
        normals = np.zeros((len(verts), 3))
        vna = np.array(vn, float)
        for idx, nidx in zip(polys, corner_n):
            for i, j in zip(idx, nidx):
                if j >= 0 and 0 <= i < len(verts):
                    normals[i] = vna[j]
        if not any(j >= 0 for nidx in corner_n for j in nidx) and len(vn) == len(v):
            normals = vna
    faces, locs = _triangulate(polys, ploc, "line")
    return _finish(verts, normals, None, faces, locs, "line", {}, unit), []


# --------------------------------------------------------------------------- public

def load_mesh(data: bytes, fmt: str | None = None, unit: str = "mm"):
    """Decode PLY/OBJ bytes into a ``TriangleMesh`` (faces present) or ``PointCloud``.

    ``fmt`` is one of ``ply-ascii``, ``ply-binary-le``, ``obj``, or ``None`` to
    sniff. ``unit='m'`` scales coordinates to millimetres.
    """
    return load_mesh_with_comments(data, fmt, unit)[0]


def load_mesh_with_comments(data: bytes, fmt=None, unit="mm"):
    if not isinstance(data, (bytes, bytearray, memoryview)):
        raise ContractError("load_mesh expects bytes")
    data = bytes(data)
    if fmt is not None and fmt not in FORMATS + ("ply",):
        raise UnsupportedFormatError(f"unsupported format {fmt!r}")
    if fmt == "obj" or (fmt is None and not data.startswith(b"ply")):
        return _load_obj(data, unit)
    try:
        return _load_ply(data, fmt, unit)
    except (MeshParseError, ContractError):
        raise
    except (ValueError, IndexError, KeyError, TypeError, OverflowError, MemoryError) as e:
        # any remaining decoding failure is still a parse error, never a crash
        raise MeshParseError(f"undecodable PLY: {e}", None) from None


def _fmt_float(x):
    return repr(float(x))


def write_mesh(mesh, scalar=None, fmt: str = "ply-binary-le", comments=()) -> bytes:
    """Encode a mesh or point cloud. ``scalar`` becomes the per-vertex 'quality' property."""
    if fmt not in FORMATS:
        raise UnsupportedFormatError(f"unsupported format {fmt!r}")
    if isinstance(mesh, TriangleMesh):
        verts, faces, normals, colors = mesh.vertices, mesh.faces, mesh.vertex_normals, \
            mesh.vertex_colors
        if scalar is None:
            scalar = mesh.scalars.get(SCALAR_NAME)
    elif isinstance(mesh, PointCloud):
        verts, faces, normals, colors = mesh.points, None, mesh.normals, None
        if normals is not None and mesh.valid is not None:
            normals = np.where(mesh.valid[:, None], normals, 0.0)
        if scalar is None:
            scalar = mesh.scalars.get(SCALAR_NAME)
    else:
        raise ContractError(f"cannot write {type(mesh).__name__}")
    n = len(verts)
    if scalar is not None:
        scalar = np.asarray(scalar, dtype=float).reshape(-1)
        if len(scalar) != n:
            raise ContractError(f"scalar channel has {len(scalar)} values for {n} vertices")
    if fmt == "obj":
        if scalar is not None:
            raise UnsupportedFormatError("OBJ cannot carry a per-vertex scalar channel")
        return _write_obj(verts, faces, normals, comments)
    return _write_ply(verts, faces, normals, colors, scalar, fmt, comments)


def _write_ply(verts, faces, normals, colors, scalar, fmt, comments):
    n = len(verts)
    props = [("x", "f8"), ("y", "f8"), ("z", "f8")]
    if normals is not None:
        props += [("nx", "f8"), ("ny", "f8"), ("nz", "f8")]
    if colors is not None:
        props += [("red", "u1"), ("green", "u1"), ("blue", "u1")]
    if scalar is not None:
        props.append((SCALAR_NAME, "f8"))
    tname = {"f8": "double", "u1": "uchar"}
    hdr = ["ply", "format " + ("ascii" if fmt == "ply-ascii" else "binary_little_endian") + " 1.0"]
    for c in comments:
        for line in str(c).splitlines():
            hdr.append("comment " + line)
    hdr.append(f"element vertex {n}")
    hdr += [f"property {tname[t]} {name}" for name, t in props]
    if faces is not None:
        hdr.append(f"element face {len(faces)}")
        hdr.append("property list uchar int vertex_indices")
    hdr.append("end_header")
    head = ("\n".join(hdr) + "\n").encode("ascii")

    cols = [verts[:, 0], verts[:, 1], verts[:, 2]]
    if normals is not None:
        cols += [normals[:, 0], normals[:, 1], normals[:, 2]]
    if colors is not None:
        cols += [colors[:, 0], colors[:, 1], colors[:, 2]]
    if scalar is not None:
        cols.append(scalar)

    if fmt == "ply-ascii":
        lines = []
        for i in range(n):
            lines.append(" ".join(
                _fmt_float(c[i]) if props[k][1] == "f8" else str(int(c[i]))
                for k, c in enumerate(cols)))
        if faces is not None:
            lines += [f"3 {a} {b} {c}" for a, b, c in faces.tolist()]
        return head + ("\n".join(lines) + ("\n" if lines else "")).encode("ascii")

    vdt = np.dtype([(name, "<" + t) for name, t in props])
    rec = np.empty(n, dtype=vdt)
    for (name, _), c in zip(props, cols):
        rec[name] = c
    body = rec.tobytes()
    if faces is not None:
        fdt = np.dtype([("n", "u1"), ("i", "<i4", (3,))])
        frec = np.empty(len(faces), dtype=fdt)
        frec["n"] = 3
        frec["i"] = faces
        body += frec.tobytes()
    return head + body


def _write_obj(verts, faces, normals, comments):
    out = [f"# {line}" for c in comments for line in str(c).splitlines()]
    out += [f"v {_fmt_float(x)} {_fmt_float(y)} {_fmt_float(z)}" for x, y, z in verts]
    if normals is not None:
        out += [f"vn {_fmt_float(x)} {_fmt_float(y)} {_fmt_float(z)}" for x, y, z in normals]
    if faces is not None:
        if normals is not None:
            out += [f"f {a + 1}//{a + 1} {b + 1}//{b + 1} {c + 1}//{c + 1}"
                    for a, b, c in faces.tolist()]
        else:
            out += [f"f {a + 1} {b + 1} {c + 1}" for a, b, c in faces.tolist()]
    return ("\n".join(out) + "\n").encode("utf-8")


def _fmt_from_path(path):
    suffix = Path(path).suffix.lower()
    if suffix == ".obj":
        return "obj"
    if suffix == ".ply":
        return "ply"
    raise UnsupportedFormatError(f"cannot infer mesh format from {path}")


def read_mesh(path, unit="mm"):
    path = Path(path)
    return load_mesh(path.read_bytes(), _fmt_from_path(path), unit)


def save_mesh(path, mesh, scalar=None, binary=True, meta=None):
    path = Path(path)
    fmt = _fmt_from_path(path)
    if fmt == "ply":
        fmt = "ply-binary-le" if binary else "ply-ascii"
    comments = [] if meta is None else [json.dumps(meta, sort_keys=True)]
    path.write_bytes(write_mesh(mesh, scalar, fmt, comments))
