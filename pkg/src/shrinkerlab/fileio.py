"""ASCII OFF/OBJ mesh files, per-vertex scalar dumps and JSON/CSV reports."""

import csv
import json
import math
from pathlib import Path

import numpy as np

from .errors import MeshFormatError
from .mesh import EmbeddedSurfaceMesh


def _fmt(x):
    return format(float(x), ".17g")


def _data_lines(text):
    for raw in text.splitlines():
        line = raw.split("#", 1)[0].strip()
        if line:
            yield line


def read_off(path):
    path = Path(path)
    lines = list(_data_lines(path.read_text()))
    if not lines or not lines[0].startswith("OFF"):
        raise MeshFormatError(f"{path}: missing OFF header")
    head = lines[0][3:].split() or []
    body = lines[1:]
    if not head:
        if not body:
            raise MeshFormatError(f"{path}: missing element counts")
        head, body = body[0].split(), body[1:]
    try:
        nv, nf = int(head[0]), int(head[1])
    except (IndexError, ValueError) as exc:
        raise MeshFormatError(f"{path}: bad element counts {head}") from exc
    if len(body) < nv + nf:
        raise MeshFormatError(f"{path}: expected {nv} vertices and {nf} faces, file is truncated")
    try:
        V = np.array([[float(t) for t in body[i].split()[:3]] for i in range(nv)])
        F = []
        for i in range(nf):
            tok = [int(t) for t in body[nv + i].split()]
            if tok[0] != 3 or len(tok) < 4:
                raise MeshFormatError(f"{path}: face {i} is not a triangle")
            F.append(tok[1:4])
    except ValueError as exc:
        raise MeshFormatError(f"{path}: {exc}") from exc
    return EmbeddedSurfaceMesh(V.reshape(-1, 3), np.array(F, dtype=np.int64).reshape(-1, 3))


def write_off(mesh, path):
    out = ["OFF", f"{mesh.n_vertices} {mesh.n_faces} {mesh.n_edges}"]
    out += [" ".join(_fmt(c) for c in v) for v in mesh.vertices]
    out += ["3 " + " ".join(str(int(i)) for i in f) for f in mesh.faces]
    Path(path).write_text("\n".join(out) + "\n")


def read_obj(path):
    path = Path(path)
    V, F = [], []
    for line in _data_lines(path.read_text()):
        tok = line.split()
        if tok[0] == "v":
            V.append([float(t) for t in tok[1:4]])
        elif tok[0] == "f":
            idx = [int(t.split("/")[0]) for t in tok[1:]]
            if len(idx) != 3:
                raise MeshFormatError(f"{path}: non-triangular face {line!r}")
            F.append([i - 1 if i > 0 else len(V) + i for i in idx])
    if not V:
        raise MeshFormatError(f"{path}: no vertices")
    return EmbeddedSurfaceMesh(np.array(V), np.array(F, dtype=np.int64).reshape(-1, 3))


def write_obj(mesh, path):
    out = ["v " + " ".join(_fmt(c) for c in v) for v in mesh.vertices]
    out += ["f " + " ".join(str(int(i) + 1) for i in f) for f in mesh.faces]
    Path(path).write_text("\n".join(out) + "\n")


def read_mesh(path):
    path = Path(path)
    if not path.exists():
        raise FileNotFoundError(f"mesh file not found: {path}")
    if path.suffix.lower() == ".obj":
        return read_obj(path)
    return read_off(path)


def write_scalar_field(values, path):
    """One value per line, in vertex order, 17 significant digits."""
    Path(path).write_text("".join(_fmt(v) + "\n" for v in np.asarray(values, float)))


def _jsonable(x):
    if isinstance(x, dict):
        return {str(k): _jsonable(v) for k, v in x.items()}
    if isinstance(x, (list, tuple)):
        return [_jsonable(v) for v in x]
    if isinstance(x, np.ndarray):
        return _jsonable(x.tolist())
    if isinstance(x, (np.bool_, bool)):
        return bool(x)
    if isinstance(x, np.integer):
        return int(x)
    if isinstance(x, (np.floating, float)):
        x = float(x)
        return x if math.isfinite(x) else str(x)
    return x


def dumps_json(obj):
    return json.dumps(_jsonable(obj), indent=2, sort_keys=True) + "\n"


def write_json(obj, path):
    Path(path).write_text(dumps_json(obj))


def write_csv(path, header, rows):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for row in rows:
            w.writerow([_fmt(v) if isinstance(v, (float, np.floating)) else v for v in row])
