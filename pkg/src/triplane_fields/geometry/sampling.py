"""Training-point generation for field fitting.

Stratified schedule: 1/6 of the points on the surface, 5/12 near it
(sigma 0.001), 1/3 at medium distance (sigma 0.01), 1/24 far (sigma 0.1),
and 1/24 uniform in the [-1, 1]^3 cube.
"""

from __future__ import annotations

import numpy as np

from ..seeds import derive_rng
from .distance import gt_sdf, gt_udf
from .mesh import TriMesh, sample_surface
from .pointcloud import PointCloud
from .voxel import VoxelGrid

# (fraction numerator over 24, gaussian sigma or None)
STRATA_FRACTIONS = ((4, 0.0), (10, 0.001), (8, 0.01), (1, 0.1), (1, None))


def strata_sizes(total: int) -> tuple:
    if total % 24 != 0:
        raise ValueError(f"total must be divisible by 24, got {total}")
    unit = total // 24
    return tuple(num * unit for num, _ in STRATA_FRACTIONS)


def sample_training_points(shape, field_kind: str, total: int, seed: int):
    """Return (points (N, 3), targets (N,)) for fitting a field of field_kind.

    UDF expects a PointCloud, SDF a watertight TriMesh, OF a VoxelGrid
    (targets are cell occupancies at centroids drawn with replacement).
    """
    rng = derive_rng(seed, "train_points", field_kind)
    if field_kind == "RF":
        raise ValueError("RF supervision uses ray batches, not point targets")

    if field_kind == "OF":
        if not isinstance(shape, VoxelGrid):
            raise ValueError("OF fitting requires a VoxelGrid")
        cent = shape.centroids()
        occ = shape.occupancy.reshape(-1)
        idx = rng.integers(0, len(cent), size=total)
        return cent[idx], occ[idx].astype(np.float64)

    sizes = strata_sizes(total)
    n_surface_total = sum(sizes[:4])
    if field_kind == "UDF":
        if not isinstance(shape, PointCloud):
            raise ValueError("UDF fitting requires a PointCloud")
        idx = rng.integers(0, len(shape), size=n_surface_total)
        base = shape.points[idx]
    elif field_kind == "SDF":
        if not isinstance(shape, TriMesh):
            raise ValueError("SDF fitting requires a TriMesh")
        sub = derive_rng(seed, "train_points", field_kind, "surface")
        base = sample_surface(shape, n_surface_total,
                              int(sub.integers(0, 2 ** 62))).points
    else:
        raise ValueError(f"unknown field kind {field_kind!r}")

    chunks = []
    offset = 0
    for size, (_, sigma) in zip(sizes[:4], STRATA_FRACTIONS[:4]):
        pts = base[offset:offset + size]
        if sigma:
            pts = pts + rng.normal(0.0, sigma, size=pts.shape)
        chunks.append(pts)
        offset += size
    chunks.append(rng.uniform(-1.0, 1.0, size=(sizes[4], 3)))
    points = np.concatenate(chunks)

    if field_kind == "UDF":
        targets = gt_udf(shape, points)
    else:
        targets = gt_sdf(shape, points, seed=seed)
    return points, targets
