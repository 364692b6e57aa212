"""Triangle meshes, procedural primitives, and surface sampling."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from ..seeds import derive_rng


@dataclass(frozen=True)
class TriMesh:
    """Indexed triangle mesh in normalized coordinates.

    vertices: (V, 3) float array.
    faces: (F, 3) int array of vertex indices.
    labels: optional (V,) int array of per-vertex part ids.
    """

    vertices: np.ndarray
    faces: np.ndarray
    labels: np.ndarray | None = None

    def __post_init__(self):
        v = np.asarray(self.vertices, dtype=np.float64)
        f = np.asarray(self.faces, dtype=np.int64)
        if v.ndim != 2 or v.shape[1] != 3:
            raise ValueError(f"vertices must be (V, 3), got {v.shape}")
        if f.ndim != 2 or f.shape[1] != 3:
            raise ValueError(f"faces must be (F, 3), got {f.shape}")
        if f.size and (f.min() < 0 or f.max() >= len(v)):
            raise ValueError(
                f"face index out of range: max {f.max()} for {len(v)} vertices")
        if self.labels is not None and len(self.labels) != len(v):
            raise ValueError("labels length must match vertex count")
        object.__setattr__(self, "vertices", v)
        object.__setattr__(self, "faces", f)
        if self.labels is not None:
            object.__setattr__(self, "labels", np.asarray(self.labels, dtype=np.int64))

    @property
    def face_normals(self) -> np.ndarray:
        """(F, 3) unit normals; zero-area faces yield zero vectors."""
        tri = self.vertices[self.faces]
        n = np.cross(tri[:, 1] - tri[:, 0], tri[:, 2] - tri[:, 0])
        norm = np.linalg.norm(n, axis=1, keepdims=True)
        return np.divide(n, norm, out=np.zeros_like(n), where=norm > 0)

    @property
    def face_areas(self) -> np.ndarray:
        tri = self.vertices[self.faces]
        return 0.5 * np.linalg.norm(
            np.cross(tri[:, 1] - tri[:, 0], tri[:, 2] - tri[:, 0]), axis=1)

    def edge_counts(self):
        """Map of undirected edge -> number of incident faces."""
        e = np.concatenate([self.faces[:, [0, 1]], self.faces[:, [1, 2]],
                            self.faces[:, [2, 0]]])
        e = np.sort(e, axis=1)
        uniq, counts = np.unique(e, axis=0, return_counts=True)
        return uniq, counts

    def is_watertight(self) -> bool:
        _, counts = self.edge_counts()
        return bool(len(counts)) and bool(np.all(counts == 2))

    def euler_characteristic(self) -> int:
        uniq, _ = self.edge_counts()
        return len(self.vertices) - len(uniq) + len(self.faces)


def _icosahedron():
    phi = (1 + 5 ** 0.5) / 2
    v = np.array([
        [-1, phi, 0], [1, phi, 0], [-1, -phi, 0], [1, -phi, 0],
        [0, -1, phi], [0, 1, phi], [0, -1, -phi], [0, 1, -phi],
        [phi, 0, -1], [phi, 0, 1], [-phi, 0, -1], [-phi, 0, 1],
    ], dtype=np.float64)
    v /= np.linalg.norm(v, axis=1, keepdims=True)
    f = np.array([
        [0, 11, 5], [0, 5, 1], [0, 1, 7], [0, 7, 10], [0, 10, 11],
        [1, 5, 9], [5, 11, 4], [11, 10, 2], [10, 7, 6], [7, 1, 8],
        [3, 9, 4], [3, 4, 2], [3, 2, 6], [3, 6, 8], [3, 8, 9],
        [4, 9, 5], [2, 4, 11], [6, 2, 10], [8, 6, 7], [9, 8, 1],
    ], dtype=np.int64)
    return v, f


def _subdivide(v, f):
    """One loop of midpoint subdivision (no smoothing)."""
    verts = list(v)
    cache = {}

    def midpoint(a, b):
        key = (min(a, b), max(a, b))
        if key not in cache:
            cache[key] = len(verts)
            verts.append((v[a] + v[b]) / 2)
        return cache[key]

    new_f = []
    for a, b, c in f:
        ab, bc, ca = midpoint(a, b), midpoint(b, c), midpoint(c, a)
        new_f += [[a, ab, ca], [b, bc, ab], [c, ca, bc], [ab, bc, ca]]
    return np.array(verts), np.array(new_f, dtype=np.int64)


def make_primitive(kind: str, params: dict | None = None, tessellation: int = 3) -> TriMesh:
    """Procedural watertight primitive centered at the origin.

    kind 'sphere': params {'radius'}; icosphere with `tessellation`
    subdivisions (V = 10*4^s + 2). Hemisphere part labels (z >= 0 -> 0).
    kind 'box': params {'half_extents': (hx, hy, hz)}; 8 verts, 12 faces.
    kind 'torus': params {'major', 'minor'}; grid of `tessellation * 8`
    segments each way; inner/outer part labels.
    """
    params = dict(params or {})
    if kind == "sphere":
        r = float(params.get("radius", 1.0))
        if r <= 0:
            raise ValueError(f"sphere radius must be positive, got {r}")
        v, f = _icosahedron()
        for _ in range(int(tessellation)):
            v, f = _subdivide(v, f)
            v = v / np.linalg.norm(v, axis=1, keepdims=True)
        labels = (v[:, 2] < 0).astype(np.int64)
        return TriMesh(v * r, f, labels)

    if kind == "box":
        h = np.asarray(params.get("half_extents", (0.5, 0.5, 0.5)), dtype=np.float64)
        if np.any(h <= 0):
            raise ValueError(f"box half extents must be positive, got {h}")
        corners = np.array([[x, y, z] for x in (-1, 1) for y in (-1, 1) for z in (-1, 1)],
                           dtype=np.float64) * h
        # 12 triangles, outward CCW orientation
        f = np.array([
            [0, 1, 3], [0, 3, 2],      # -x
            [4, 6, 7], [4, 7, 5],      # +x
            [0, 4, 5], [0, 5, 1],      # -y
            [2, 3, 7], [2, 7, 6],      # +y
            [0, 2, 6], [0, 6, 4],      # -z
            [1, 5, 7], [1, 7, 3],      # +z
        ], dtype=np.int64)
        labels = (corners[:, 2] < 0).astype(np.int64)
        return TriMesh(corners, f, labels)

    if kind == "torus":
        major = float(params.get("major", 0.7))
        minor = float(params.get("minor", 0.25))
        if major <= 0 or minor <= 0:
            raise ValueError(f"torus radii must be positive, got {major}, {minor}")
        n = max(8, int(tessellation) * 8)
        u = np.arange(n) * (2 * np.pi / n)
        v = np.arange(n) * (2 * np.pi / n)
        uu, vv = np.meshgrid(u, v, indexing="ij")
        x = (major + minor * np.cos(vv)) * np.cos(uu)
        y = (major + minor * np.cos(vv)) * np.sin(uu)
        z = minor * np.sin(vv)
        verts = np.stack([x, y, z], axis=-1).reshape(-1, 3)
        idx = np.arange(n * n).reshape(n, n)
        i0 = idx
        i1 = np.roll(idx, -1, axis=0)
        i2 = np.roll(idx, -1, axis=1)
        i3 = np.roll(np.roll(idx, -1, axis=0), -1, axis=1)
        fa = np.stack([i0, i1, i3], axis=-1).reshape(-1, 3)
        fb = np.stack([i0, i3, i2], axis=-1).reshape(-1, 3)
        faces = np.concatenate([fa, fb])
        # inner half: closer to the symmetry axis than the spine circle
        rho = np.hypot(verts[:, 0], verts[:, 1])
        labels = (rho < major).astype(np.int64)
        return TriMesh(verts, faces, labels)

    raise ValueError(f"unknown primitive kind {kind!r}")


def _points_of(shape):
    if isinstance(shape, TriMesh):
        return shape.vertices
    return shape.points


def _with_points(shape, pts):
    if isinstance(shape, TriMesh):
        return TriMesh(pts, shape.faces, shape.labels)
    return shape.replace_points(pts)


def normalize_unit_sphere(shape):
    """Center at the origin and scale so the farthest point has norm 1.

    Returns (normalized shape, (center, scale)) where
    normalized = (points - center) * scale.
    """
    pts = _points_of(shape)
    if len(pts) == 0:
        raise ValueError("cannot normalize an empty shape")
    center = pts.mean(axis=0)
    shifted = pts - center
    radius = np.linalg.norm(shifted, axis=1).max()
    if radius < 1e-12:
        raise ValueError("degenerate shape: all points coincide")
    scale = 1.0 / radius
    return _with_points(shape, shifted * scale), (center, scale)


def augment_anisotropic(shape, seed: int):
    """Random per-axis scaling U(0.75, 1.25), then unit-sphere renormalization."""
    rng = derive_rng(seed, "augment")
    factors = rng.uniform(0.75, 1.25, size=3)
    scaled = _with_points(shape, _points_of(shape) * factors)
    out, _ = normalize_unit_sphere(scaled)
    return out


def sample_surface(mesh: TriMesh, n: int, seed: int):
    """Area-weighted uniform surface samples as a PointCloud.

    Inherits the nearest-vertex part label when the mesh is labeled.
    """
    from .pointcloud import PointCloud

    if n == 0:
        labels = np.zeros(0, dtype=np.int64) if mesh.labels is not None else None
        return PointCloud(np.zeros((0, 3)), labels)
    areas = mesh.face_areas
    total = areas.sum()
    if total <= 0:
        raise ValueError("cannot sample a zero-area mesh")
    rng = derive_rng(seed, "sample_surface")
    fidx = rng.choice(len(areas), size=n, p=areas / total)
    tri = mesh.vertices[mesh.faces[fidx]]
    u, v = rng.random(n), rng.random(n)
    flip = u + v > 1
    u[flip], v[flip] = 1 - u[flip], 1 - v[flip]
    w = 1 - u - v
    bary = np.stack([w, u, v], axis=1)
    pts = (tri * bary[:, :, None]).sum(axis=1)
    labels = None
    if mesh.labels is not None:
        nearest_corner = np.argmax(bary, axis=1)
        labels = mesh.labels[mesh.faces[fidx, nearest_corner]]
    return PointCloud(pts, labels)
