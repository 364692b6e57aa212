"""Reconstruction checks: marching cubes against a per-cube reference,
analytic level sets, rendering weight partition."""

import numpy as np
import pytest

from triplane_fields._mc_tables import EDGE_CORNERS, EDGE_TABLE, TRI_TABLE
from triplane_fields.field import init_random
from triplane_fields.recon import (marching_cubes, mesh_from_sdf, pc_from_udf,
                                   ray_sphere_span, render_rays, render_rf,
                                   voxel_from_of)
from triplane_fields.geometry import orbit_cameras

RNG = np.random.default_rng(42)

CORNER_OFFSETS = [(0, 0, 0), (1, 0, 0), (1, 1, 0), (0, 1, 0),
                  (0, 0, 1), (1, 0, 1), (1, 1, 1), (0, 1, 1)]


def test_lookup_tables_consistent():
    assert len(EDGE_TABLE) == len(TRI_TABLE) == 256
    assert EDGE_TABLE[0] == EDGE_TABLE[255] == 0
    for code in range(256):
        bits = {e for e in range(12) if EDGE_TABLE[code] >> e & 1}
        assert set(TRI_TABLE[code]) == bits
        # complementary corner sign patterns use the same edges
        assert EDGE_TABLE[code] == EDGE_TABLE[255 - code]


def reference_marching_cubes(values, extent=1.0):
    """Slow per-cube triangulation, no vertex sharing. Returns the
    multiset of triangle centroids for comparison."""
    S = values.shape[0]
    R = S - 1
    step = 2.0 * extent / R
    v = np.where(values == 0.0, 1e-9, values)
    centroids = []
    for i in range(R):
        for j in range(R):
            for k in range(R):
                code = 0
                for c, (ox, oy, oz) in enumerate(CORNER_OFFSETS):
                    if v[i + ox, j + oy, k + oz] < 0:
                        code |= 1 << c
                tris = TRI_TABLE[code]
                if not tris:
                    continue
                everts = {}
                for e in set(tris):
                    c1, c2 = EDGE_CORNERS[e]
                    o1 = np.array(CORNER_OFFSETS[c1])
                    o2 = np.array(CORNER_OFFSETS[c2])
                    v1 = v[i + o1[0], j + o1[1], k + o1[2]]
                    v2 = v[i + o2[0], j + o2[1], k + o2[2]]
                    t = -v1 / (v2 - v1)
                    p1 = (np.array([i, j, k]) + o1) * step - extent
                    p2 = (np.array([i, j, k]) + o2) * step - extent
                    everts[e] = p1 + t * (p2 - p1)
                for n in range(0, len(tris), 3):
                    tri = [everts[tris[n]], everts[tris[n + 1]],
                           everts[tris[n + 2]]]
                    centroids.append(np.mean(tri, axis=0))
    return np.array(centroids)


def test_marching_cubes_matches_reference_oracle():
    for trial in range(3):
        rng = np.random.default_rng(trial)
        vals = rng.normal(size=(5, 5, 5))
        mesh = marching_cubes(vals)
        got = mesh.vertices[mesh.faces].mean(axis=1)
        expect = reference_marching_cubes(vals)
        assert len(got) == len(expect)
        # same centroid multisets (round keys so tiny float differences
        # cannot reorder the sort)
        order_a = np.lexsort(np.round(got, 8).T)
        order_b = np.lexsort(np.round(expect, 8).T)
        assert np.allclose(got[order_a], expect[order_b], atol=1e-7)


def test_marching_cubes_sphere_criteria():
    def pred(p):
        return 0.5 - (np.linalg.norm(p, axis=1) - 0.5)
    for R in (32, 64):
        mesh = mesh_from_sdf(pred, resolution=R)
        r = np.linalg.norm(mesh.vertices, axis=1)
        assert np.abs(r - 0.5).max() < 2.0 / R
        assert mesh.is_watertight()
        assert mesh.euler_characteristic() == 2
        normals = mesh.face_normals
        centers = mesh.vertices[mesh.faces].mean(axis=1)
        assert np.all(np.einsum("ij,ij->i", normals, centers) > 0)


def test_marching_cubes_empty_volume():
    mesh = marching_cubes(np.ones((4, 4, 4)))
    assert len(mesh.vertices) == 0 and len(mesh.faces) == 0


def test_marching_cubes_vertices_welded():
    vals = np.random.default_rng(3).normal(size=(6, 6, 6))
    mesh = marching_cubes(vals)
    # no duplicate vertex positions (global edge indexing shares them)
    uniq = np.unique(np.round(mesh.vertices, 12), axis=0)
    assert len(uniq) == len(mesh.vertices)


def test_voxel_from_of_threshold():
    def pred(p):
        return (np.abs(p) < 0.5).all(axis=1) * 0.9 + 0.05
    grid = voxel_from_of(pred, resolution=16)
    cent = grid.centroids().reshape(16, 16, 16, 3)
    expect = (np.abs(cent) < 0.5).all(axis=3)
    assert np.array_equal(grid.occupancy, expect)


def test_ray_sphere_span_cases():
    o = np.array([[0, 0, -2.0], [0, 0, -2.0], [0, 2.0, -2.0], [0, 0, 0.0]])
    d = np.array([[0, 0, 1.0], [0, 0, -1.0], [0, 0, 1.0], [0, 0, 1.0]])
    t0, t1, hit = ray_sphere_span(o, d)
    assert hit[0] and np.isclose(t0[0], 1.0) and np.isclose(t1[0], 3.0)
    assert not hit[1]          # pointing away
    assert not hit[2]          # misses laterally
    assert hit[3] and t0[3] == 0.0 and np.isclose(t1[3], 1.0)   # inside


def test_render_weights_partition_unity():
    field = init_random("RF", channels=4, seed=11, requires_grad=False)
    cam = orbit_cameras(1)[0]
    px = RNG.integers(0, 64 * 64, 32)
    origins, dirs = cam.rays(px)
    from triplane_fields.engine import no_grad
    from triplane_fields.recon import ray_sphere_span as span
    with no_grad():
        color = render_rays(field, origins, dirs).data
    assert color.shape == (32, 3)
    assert np.all((color >= 0) & (color <= 1 + 1e-6))
    # recompute weights directly and check they partition unity
    t0, t1, hit = span(origins, dirs)
    frac = (np.arange(96) + 0.5) / 96
    ts = t0[:, None] + (t1 - t0)[:, None] * frac
    pts = origins[:, None] + ts[..., None] * dirs[:, None]
    with no_grad():
        out = field.forward(pts.reshape(-1, 3).astype(np.float32)).data
    sigma = out[:, 3].reshape(32, 96)
    delta = ((t1 - t0) / 96)[:, None]
    cum = np.cumsum(sigma * delta, axis=1)
    w = np.exp(-(cum - sigma * delta)) - np.exp(-cum)
    assert np.abs(w.sum(axis=1) + np.exp(-cum[:, -1]) - 1.0).max() < 1e-6


def test_render_rf_miss_rays_are_white():
    field = init_random("RF", channels=4, seed=2, requires_grad=False)
    cam = orbit_cameras(1)[0]
    img = render_rf(field, cam, chunk=1024)
    origins, corner_dirs = cam.rays(np.array([0]))
    # corner pixels look past the unit sphere from radius 2.5 -> background
    t0, t1, hit = ray_sphere_span(origins, corner_dirs)
    if not hit[0]:
        assert np.allclose(img.pixels[0, 0], 1.0)


def test_pc_from_udf_on_analytic_sphere():
    # exact UDF of the r=0.6 sphere, encoded the way fields store it
    class Fake:
        kind = "UDF"
        d_max = 0.5

        def forward(self, pts):
            from triplane_fields.engine import Tensor, power, tensor, tsum
            p = pts if isinstance(pts, Tensor) else tensor(pts)
            nrm = power(tsum(p * p, axis=1, keepdims=True) + 1e-12, 0.5)
            d = power(power(nrm - 0.6, 2.0) + 1e-12, 0.5)
            return 1.0 - d * (1.0 / 0.5)

    pc = pc_from_udf(Fake(), n_points=2000, seed=0)
    r = np.linalg.norm(pc.points, axis=1)
    assert len(pc.points) == 2000
    assert np.abs(r - 0.6).mean() < 5e-3
