"""Readers and writers for explicit shapes and images.

Formats: OFF / OBJ / PLY-ascii (meshes and point clouds), XYZ point lists,
voxel-raw occupancy grids, and binary PPM (P6) / PGM (P5) images.

voxel-raw layout: 16-byte header (magic "VOXG", u32 resolution, u32
reserved, 4 pad bytes) followed by V^3 bytes of {0, 1}, little-endian,
index order (i, j, k) row-major.
"""

from __future__ import annotations

import struct
from pathlib import Path

import numpy as np

from .mesh import TriMesh
from .pointcloud import PointCloud
from .voxel import VoxelGrid


class ParseError(ValueError):
    """Malformed input file; message carries the path and line/offset."""


VOXEL_MAGIC = b"VOXG"


def _tokens(path):
    """Yield (line_number, token_list) for non-empty, non-comment lines."""
    with open(path) as fh:
        for ln, line in enumerate(fh, start=1):
            line = line.split("#", 1)[0].strip()
            if line:
                yield ln, line.split()


def load_off(path) -> TriMesh:
    it = _tokens(path)
    try:
        ln, head = next(it)
    except StopIteration:
        raise ParseError(f"{path}: empty file")
    if head[0] != "OFF":
        raise ParseError(f"{path}:{ln}: expected OFF header, got {head[0]!r}")
    if len(head) == 4:
        counts = head[1:]
        ln_counts = ln
    else:
        ln_counts, counts = next(it)
    try:
        nv, nf, _ = (int(x) for x in counts)
    except ValueError:
        raise ParseError(f"{path}:{ln_counts}: bad count line {counts}")
    verts, faces = [], []
    for _ in range(nv):
        try:
            ln, tok = next(it)
        except StopIteration:
            raise ParseError(f"{path}: truncated vertex list")
        try:
            verts.append([float(x) for x in tok[:3]])
        except ValueError:
            raise ParseError(f"{path}:{ln}: bad vertex {tok}")
    for _ in range(nf):
        try:
            ln, tok = next(it)
        except StopIteration:
            raise ParseError(f"{path}: truncated face list")
        try:
            k = int(tok[0])
            idx = [int(x) for x in tok[1:1 + k]]
        except (ValueError, IndexError):
            raise ParseError(f"{path}:{ln}: bad face {tok}")
        for i in range(1, k - 1):          # fan-triangulate polygons
            faces.append([idx[0], idx[i], idx[i + 1]])
    try:
        return TriMesh(np.array(verts, dtype=np.float64).reshape(-1, 3),
                       np.array(faces, dtype=np.int64).reshape(-1, 3))
    except ValueError as e:
        raise ParseError(f"{path}: {e}")


def save_off(mesh: TriMesh, path):
    with open(path, "w") as fh:
        fh.write("OFF\n")
        fh.write(f"{len(mesh.vertices)} {len(mesh.faces)} 0\n")
        for v in mesh.vertices:
            fh.write(f"{v[0]:.9g} {v[1]:.9g} {v[2]:.9g}\n")
        for f in mesh.faces:
            fh.write(f"3 {f[0]} {f[1]} {f[2]}\n")


def load_obj(path) -> TriMesh:
    verts, faces = [], []
    for ln, tok in _tokens(path):
        if tok[0] == "v":
            try:
                verts.append([float(x) for x in tok[1:4]])
            except ValueError:
                raise ParseError(f"{path}:{ln}: bad vertex {tok}")
        elif tok[0] == "f":
            try:
                idx = [int(t.split("/")[0]) - 1 for t in tok[1:]]
            except ValueError:
                raise ParseError(f"{path}:{ln}: bad face {tok}")
            for i in range(1, len(idx) - 1):
                faces.append([idx[0], idx[i], idx[i + 1]])
    try:
        return TriMesh(np.array(verts, dtype=np.float64).reshape(-1, 3),
                       np.array(faces, dtype=np.int64).reshape(-1, 3))
    except ValueError as e:
        raise ParseError(f"{path}: {e}")


def save_obj(mesh: TriMesh, path):
    with open(path, "w") as fh:
        for v in mesh.vertices:
            fh.write(f"v {v[0]:.9g} {v[1]:.9g} {v[2]:.9g}\n")
        for f in mesh.faces:
            fh.write(f"f {f[0] + 1} {f[1] + 1} {f[2] + 1}\n")


def load_xyz(path) -> PointCloud:
    pts = []
    for ln, tok in _tokens(path):
        try:
            pts.append([float(x) for x in tok[:3]])
        except ValueError:
            raise ParseError(f"{path}:{ln}: bad point {tok}")
    return PointCloud(np.array(pts, dtype=np.float64).reshape(-1, 3))


def save_xyz(cloud: PointCloud, path):
    with open(path, "w") as fh:
        for p in cloud.points:
            fh.write(f"{p[0]:.9g} {p[1]:.9g} {p[2]:.9g}\n")


def load_ply(path):
    """ASCII PLY. Returns a PointCloud, or a TriMesh if faces are present."""
    with open(path) as fh:
        lines = fh.read().splitlines()
    if not lines or lines[0].strip() != "ply":
        raise ParseError(f"{path}:1: missing ply magic")
    elements = []          # (name, count, [property names])
    i = 1
    while i < len(lines):
        tok = lines[i].split()
        i += 1
        if not tok:
            continue
        if tok[0] == "format":
            if tok[1] != "ascii":
                raise ParseError(f"{path}:{i}: only ascii PLY is supported")
        elif tok[0] == "element":
            elements.append([tok[1], int(tok[2]), []])
        elif tok[0] == "property":
            if not elements:
                raise ParseError(f"{path}:{i}: property before element")
            elements[-1][2].append(tok[-1])
        elif tok[0] == "end_header":
            break
    else:
        raise ParseError(f"{path}: missing end_header")

    data = {}
    for name, count, props in elements:
        rows = []
        for _ in range(count):
            if i >= len(lines):
                raise ParseError(f"{path}: truncated element {name}")
            rows.append(lines[i].split())
            i += 1
        data[name] = (props, rows)

    if "vertex" not in data:
        raise ParseError(f"{path}: no vertex element")
    props, rows = data["vertex"]
    try:
        cols = {p: np.array([float(r[j]) for r in rows]) for j, p in enumerate(props)}
    except (ValueError, IndexError):
        raise ParseError(f"{path}: malformed vertex data")
    pts = np.stack([cols["x"], cols["y"], cols["z"]], axis=1)
    labels = cols["label"].astype(np.int64) if "label" in cols else None

    if "face" in data:
        faces = []
        for r in data["face"][1]:
            k = int(r[0])
            idx = [int(x) for x in r[1:1 + k]]
            for j in range(1, k - 1):
                faces.append([idx[0], idx[j], idx[j + 1]])
        try:
            return TriMesh(pts, np.array(faces, dtype=np.int64).reshape(-1, 3), labels)
        except ValueError as e:
            raise ParseError(f"{path}: {e}")
    return PointCloud(pts, labels)


def save_ply(obj, path):
    if isinstance(obj, TriMesh):
        pts, labels, faces = obj.vertices, obj.labels, obj.faces
    else:
        pts, labels, faces = obj.points, obj.labels, None
    with open(path, "w") as fh:
        fh.write("ply\nformat ascii 1.0\n")
        fh.write(f"element vertex {len(pts)}\n")
        fh.write("property float x\nproperty float y\nproperty float z\n")
        if labels is not None:
            fh.write("property int label\n")
        if faces is not None:
            fh.write(f"element face {len(faces)}\n")
            fh.write("property list uchar int vertex_indices\n")
        fh.write("end_header\n")
        for i, p in enumerate(pts):
            row = f"{p[0]:.9g} {p[1]:.9g} {p[2]:.9g}"
            if labels is not None:
                row += f" {labels[i]}"
            fh.write(row + "\n")
        if faces is not None:
            for f in faces:
                fh.write(f"3 {f[0]} {f[1]} {f[2]}\n")


def load_voxel_raw(path) -> VoxelGrid:
    raw = Path(path).read_bytes()
    if len(raw) < 16 or raw[:4] != VOXEL_MAGIC:
        raise ParseError(f"{path}: bad voxel-raw magic at offset 0")
    res, _reserved = struct.unpack_from("<II", raw, 4)
    expected = 16 + res ** 3
    if len(raw) != expected:
        raise ParseError(f"{path}: expected {expected} bytes, got {len(raw)}")
    body = np.frombuffer(raw, dtype=np.uint8, offset=16)
    if body.max(initial=0) > 1:
        raise ParseError(f"{path}: occupancy bytes must be 0 or 1")
    return VoxelGrid(res, body.reshape(res, res, res).astype(bool))


def save_voxel_raw(grid: VoxelGrid, path):
    with open(path, "wb") as fh:
        fh.write(VOXEL_MAGIC)
        fh.write(struct.pack("<II", grid.resolution, 0))
        fh.write(b"\x00" * 4)
        fh.write(grid.occupancy.astype(np.uint8).tobytes())


def _load_netpbm(path, magic, channels):
    raw = Path(path).read_bytes()
    parts = raw.split(maxsplit=4)
    if parts[0] != magic:
        raise ParseError(f"{path}: expected {magic.decode()} magic")
    try:
        w, h, maxval = int(parts[1]), int(parts[2]), int(parts[3])
    except (ValueError, IndexError):
        raise ParseError(f"{path}: bad netpbm header")
    body = parts[4] if len(parts) > 4 else b""
    need = w * h * channels
    if len(body) < need:
        raise ParseError(f"{path}: truncated pixel data ({len(body)} < {need})")
    arr = np.frombuffer(body[:need], dtype=np.uint8).astype(np.float64) / maxval
    shape = (h, w, channels) if channels > 1 else (h, w)
    return arr.reshape(shape)


def load_ppm(path) -> np.ndarray:
    return _load_netpbm(path, b"P6", 3)


def load_pgm(path) -> np.ndarray:
    return _load_netpbm(path, b"P5", 1)


def save_ppm(image: np.ndarray, path):
    img = np.asarray(image)
    h, w, _ = img.shape
    data = np.clip(np.round(img * 255), 0, 255).astype(np.uint8)
    with open(path, "wb") as fh:
        fh.write(f"P6 {w} {h} 255\n".encode())
        fh.write(data.tobytes())


def save_pgm(image: np.ndarray, path):
    img = np.asarray(image)
    h, w = img.shape
    data = np.clip(np.round(img * 255), 0, 255).astype(np.uint8)
    with open(path, "wb") as fh:
        fh.write(f"P5 {w} {h} 255\n".encode())
        fh.write(data.tobytes())


_LOADERS = {
    "off": load_off, "obj": load_obj, "ply": load_ply,
    "xyz": load_xyz, "voxel-raw": load_voxel_raw,
}
_EXT_FORMAT = {".off": "off", ".obj": "obj", ".ply": "ply",
               ".xyz": "xyz", ".vox": "voxel-raw"}


def load_shape(path, fmt: str | None = None):
    """Load a TriMesh, PointCloud, or VoxelGrid; format inferred from suffix."""
    path = Path(path)
    if fmt is None:
        fmt = _EXT_FORMAT.get(path.suffix.lower())
        if fmt is None:
            raise ValueError(f"cannot infer format from suffix {path.suffix!r}")
    if fmt not in _LOADERS:
        raise ValueError(f"unknown format {fmt!r}; expected one of {sorted(_LOADERS)}")
    return _LOADERS[fmt](path)


def save_shape(obj, path, fmt: str | None = None):
    """Write a TriMesh, PointCloud, or VoxelGrid; format inferred from suffix."""
    path = Path(path)
    if fmt is None:
        fmt = _EXT_FORMAT.get(path.suffix.lower())
        if fmt is None:
            raise ValueError(f"cannot infer format from suffix {path.suffix!r}")
    savers = {
        "off": save_off, "obj": save_obj, "ply": save_ply,
        "xyz": save_xyz, "voxel-raw": save_voxel_raw,
    }
    if fmt not in savers:
        raise ValueError(f"unknown format {fmt!r}; expected one of {sorted(savers)}")
    savers[fmt](obj, path)
