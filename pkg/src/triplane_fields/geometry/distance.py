"""Ground-truth field evaluation: UDF, SDF, and mesh voxelization."""

from __future__ import annotations

import warnings

import numpy as np
from scipy.spatial import cKDTree

from ..seeds import derive_rng
from .mesh import TriMesh
from .pointcloud import PointCloud
from .voxel import VoxelGrid, voxel_centroids

_PAIR_BUDGET = 4_000_000  # point x triangle pairs per vectorized chunk


def gt_udf(cloud: PointCloud, query_points: np.ndarray) -> np.ndarray:
    """Exact nearest-neighbor Euclidean distance to the cloud per query."""
    if len(cloud) == 0:
        raise ValueError("cannot evaluate UDF of an empty cloud")
    tree = cKDTree(cloud.points)
    d, _ = tree.query(np.asarray(query_points, dtype=np.float64))
    return d


def _dist2_core(ap, ab, ac, a, p):
    """Squared point-triangle distance for pre-broadcast (..., 3) operands.

    Ericson's closest-point-on-triangle region test.
    """
    dot = lambda x, y: np.einsum("...k,...k->...", x, y)
    d1 = dot(ab, ap)
    d2 = dot(ac, ap)
    bp = ap - ab
    d3 = dot(ab, bp)
    d4 = dot(ac, bp)
    cp = ap - ac
    d5 = dot(ab, cp)
    d6 = dot(ac, cp)

    va = d3 * d6 - d5 * d4
    vb = d5 * d2 - d1 * d6
    vc = d1 * d4 - d3 * d2
    denom = va + vb + vc
    with np.errstate(divide="ignore", invalid="ignore"):
        v_face = np.where(denom != 0, vb / np.where(denom != 0, denom, 1), 0.0)
        w_face = np.where(denom != 0, vc / np.where(denom != 0, denom, 1), 0.0)
        t_ab = np.where(d1 != d3, d1 / np.where(d1 != d3, d1 - d3, 1), 0.0)
        t_ac = np.where(d2 != d6, d2 / np.where(d2 != d6, d2 - d6, 1), 0.0)
        den_bc = (d4 - d3) + (d5 - d6)
        t_bc = np.where(den_bc != 0, (d4 - d3) / np.where(den_bc != 0, den_bc, 1), 0.0)

    in_a = (d1 <= 0) & (d2 <= 0)
    in_b = (d3 >= 0) & (d4 <= d3)
    in_c = (d6 >= 0) & (d5 <= d6)
    on_ab = (vc <= 0) & (d1 >= 0) & (d3 <= 0)
    on_ac = (vb <= 0) & (d2 >= 0) & (d6 <= 0)
    on_bc = (va <= 0) & (d4 - d3 >= 0) & (d5 - d6 >= 0)

    v = v_face
    w = w_face
    corner = in_a | in_b | in_c
    v = np.where(corner, 0.0, v)
    w = np.where(corner, 0.0, w)
    v = np.where(in_b, 1.0, v)
    w = np.where(in_c, 1.0, w)
    sel = on_ab & ~corner
    v = np.where(sel, np.clip(t_ab, 0, 1), v)
    w = np.where(sel, 0.0, w)
    done = corner | sel
    sel = on_ac & ~done
    v = np.where(sel, 0.0, v)
    w = np.where(sel, np.clip(t_ac, 0, 1), w)
    done |= sel
    sel = on_bc & ~done
    tb = np.clip(t_bc, 0, 1)
    v = np.where(sel, 1.0 - tb, v)
    w = np.where(sel, tb, w)

    closest = a + v[..., None] * ab + w[..., None] * ac
    diff = p - closest
    return dot(diff, diff)


def _point_tri_dist2(p: np.ndarray, tri: np.ndarray) -> np.ndarray:
    """Squared distance from each of N points to each of M triangles -> (N, M)."""
    a = tri[None, :, 0]
    ab = np.broadcast_to(tri[None, :, 1] - tri[None, :, 0], (len(p), len(tri), 3))
    ac = np.broadcast_to(tri[None, :, 2] - tri[None, :, 0], (len(p), len(tri), 3))
    pp = np.broadcast_to(p[:, None, :], (len(p), len(tri), 3))
    return _dist2_core(pp - a, ab, ac, a, pp)


def _point_tri_dist2_paired(p: np.ndarray, tri: np.ndarray) -> np.ndarray:
    """p: (N, 3); tri: (N, K, 3, 3) per-point candidates -> (N, K)."""
    a = tri[:, :, 0]
    ab = tri[:, :, 1] - a
    ac = tri[:, :, 2] - a
    pp = np.broadcast_to(p[:, None, :], a.shape)
    return _dist2_core(pp - a, ab, ac, a, pp)


def point_mesh_distance(mesh: TriMesh, query_points: np.ndarray) -> np.ndarray:
    """Unsigned exact distance from each query to the mesh surface."""
    p = np.asarray(query_points, dtype=np.float64).reshape(-1, 3)
    tri = mesh.vertices[mesh.faces]
    m = len(tri)
    if m * len(p) <= _PAIR_BUDGET or m <= 64:
        out = np.empty(len(p))
        step = max(1, _PAIR_BUDGET // max(m, 1))
        for i in range(0, len(p), step):
            out[i:i + step] = np.sqrt(_point_tri_dist2(p[i:i + step], tri).min(axis=1))
        return out

    # k-NN prune on face centroids; brute force wherever the bound fails
    centroids = tri.mean(axis=1)
    circumr = np.linalg.norm(tri - centroids[:, None, :], axis=2).max(axis=1)
    r_max = circumr.max()
    tree = cKDTree(centroids)
    k = min(24, m - 1)
    cd, ci = tree.query(p, k=k + 1)
    out = np.empty(len(p))
    step = max(1, _PAIR_BUDGET // (k * 2))
    bad_idx = []
    for i in range(0, len(p), step):
        sl = slice(i, min(i + step, len(p)))
        d2 = _point_tri_dist2_paired(p[sl], tri[ci[sl, :k]])
        dmin = np.sqrt(d2.min(axis=1))
        out[sl] = dmin
        bad_idx.append(i + np.flatnonzero(cd[sl, k] - r_max < dmin))
    bad = np.concatenate(bad_idx)
    if len(bad):
        stepb = max(1, _PAIR_BUDGET // m)
        for i in range(0, len(bad), stepb):
            sel = bad[i:i + stepb]
            out[sel] = np.sqrt(_point_tri_dist2(p[sel], tri).min(axis=1))
    return out


def _crossings_dense(origins, direction, tri):
    """Moller-Trumbore hit counts testing every origin against every triangle."""
    counts = np.zeros(len(origins), dtype=np.int64)
    v0 = tri[:, 0]
    e1 = tri[:, 1] - v0
    e2 = tri[:, 2] - v0
    h = np.cross(direction, e2)                     # (M, 3)
    det = np.einsum("mk,mk->m", e1, h)
    ok = np.abs(det) > 1e-12
    inv = np.where(ok, 1.0 / np.where(ok, det, 1.0), 0.0)
    step = max(1, _PAIR_BUDGET // max(len(tri), 1))
    for i in range(0, len(origins), step):
        o = origins[i:i + step]
        s = o[:, None, :] - v0[None]                # (n, M, 3)
        u = np.einsum("nmk,mk->nm", s, h) * inv[None]
        q = np.cross(s, np.broadcast_to(e1[None], s.shape))
        v = np.einsum("nmk,k->nm", q, direction) * inv[None]
        t = np.einsum("nmk,mk->nm", q, e2) * inv[None]
        hit = ok[None] & (u >= 0) & (v >= 0) & (u + v <= 1) & (t > 1e-9)
        counts[i:i + step] = hit.sum(axis=1)
    return counts


def _ray_crossings(origins: np.ndarray, direction: np.ndarray, tri: np.ndarray) -> np.ndarray:
    """Number of triangle intersections along each ray.

    All rays share one direction, so a ray can only hit triangles whose
    projection onto the plane orthogonal to the direction contains the
    ray's projected origin. A uniform 2D grid over projected triangle
    bounding boxes prunes the candidate set; small instances skip it.
    """
    n, m = len(origins), len(tri)
    if n * m <= _PAIR_BUDGET or m <= 64:
        return _crossings_dense(origins, direction, tri)

    # orthonormal basis spanning the plane orthogonal to the direction
    aux = np.array([1.0, 0.0, 0.0])
    if abs(direction[0]) > 0.9:
        aux = np.array([0.0, 1.0, 0.0])
    u_ax = np.cross(direction, aux)
    u_ax /= np.linalg.norm(u_ax)
    basis = np.stack([u_ax, np.cross(direction, u_ax)])      # (2, 3)

    tp = tri @ basis.T                                       # (M, 3, 2)
    op = origins @ basis.T                                   # (N, 2)
    lo2, hi2 = tp.min(axis=1), tp.max(axis=1)
    span_lo = np.minimum(lo2.min(axis=0), op.min(axis=0)) - 1e-9
    span_hi = np.maximum(hi2.max(axis=0), op.max(axis=0)) + 1e-9
    G = int(np.clip(np.sqrt(m), 8, 128))
    cell = (span_hi - span_lo) / G

    def cell_of(xy):
        return np.clip(((xy - span_lo) // cell).astype(np.int64), 0, G - 1)

    # (cell id, triangle id) pairs for every cell a triangle's box touches
    c_lo, c_hi = cell_of(lo2), cell_of(hi2)
    reps = (c_hi[:, 0] - c_lo[:, 0] + 1) * (c_hi[:, 1] - c_lo[:, 1] + 1)
    tri_ids = np.repeat(np.arange(m), reps)
    offsets = np.concatenate([[0], np.cumsum(reps)])
    local = np.arange(len(tri_ids)) - offsets[tri_ids]
    width = (c_hi[:, 1] - c_lo[:, 1] + 1)[tri_ids]
    cx = c_lo[tri_ids, 0] + local // width
    cy = c_lo[tri_ids, 1] + local % width
    tri_cells = cx * G + cy
    order = np.argsort(tri_cells, kind="stable")
    tri_cells, tri_ids = tri_cells[order], tri_ids[order]
    bounds = np.searchsorted(tri_cells, np.arange(G * G + 1))

    o_cells = cell_of(op)[:, 0] * G + cell_of(op)[:, 1]
    o_order = np.argsort(o_cells, kind="stable")
    counts = np.zeros(n, dtype=np.int64)
    o_bounds = np.searchsorted(o_cells[o_order], np.arange(G * G + 1))
    for c in np.unique(o_cells):
        cand = tri_ids[bounds[c]:bounds[c + 1]]
        if len(cand) == 0:
            continue
        pts = o_order[o_bounds[c]:o_bounds[c + 1]]
        counts[pts] = _crossings_dense(origins[pts], direction, tri[cand])
    return counts


def inside_mesh(mesh: TriMesh, query_points: np.ndarray, seed: int = 0) -> np.ndarray:
    """Boolean inside test by ray-crossing parity, 3-ray majority vote."""
    p = np.asarray(query_points, dtype=np.float64).reshape(-1, 3)
    tri = mesh.vertices[mesh.faces]
    rng = derive_rng(seed, "parity_rays")
    votes = np.zeros(len(p), dtype=np.int64)
    for _ in range(3):
        d = rng.normal(size=3)
        d /= np.linalg.norm(d)
        votes += _ray_crossings(p, d, tri) % 2
    return votes >= 2


def gt_sdf(mesh: TriMesh, query_points: np.ndarray, seed: int = 0) -> np.ndarray:
    """Signed distance: exact point-triangle magnitude, parity-voted sign.

    Positive outside, negative inside. Non-watertight meshes fall back to a
    nearest-face-normal sign with a warning.
    """
    p = np.asarray(query_points, dtype=np.float64).reshape(-1, 3)
    dist = point_mesh_distance(mesh, p)
    if mesh.is_watertight():
        inside = inside_mesh(mesh, p, seed)
    else:
        warnings.warn("mesh is not watertight; SDF sign from nearest face normal")
        tri = mesh.vertices[mesh.faces]
        centroids = tri.mean(axis=1)
        _, nearest = cKDTree(centroids).query(p)
        normals = mesh.face_normals[nearest]
        inside = np.einsum("nk,nk->n", p - centroids[nearest], normals) < 0
    return np.where(inside, -dist, dist)


def voxelize(mesh: TriMesh, resolution: int, extent=(-1.0, 1.0)) -> VoxelGrid:
    """Occupancy grid: a cell is occupied iff its centroid is inside the mesh."""
    if resolution < 1:
        raise ValueError("resolution must be >= 1")
    if not mesh.is_watertight():
        raise ValueError("voxelize requires a watertight mesh")
    cent = voxel_centroids(resolution, extent)
    occ = inside_mesh(mesh, cent)
    return VoxelGrid(resolution, occ.reshape(resolution, resolution, resolution), extent)
