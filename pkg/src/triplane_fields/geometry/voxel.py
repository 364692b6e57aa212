"""Occupancy voxel grids over the [-1, 1]^3 cube."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np


@dataclass(frozen=True)
class VoxelGrid:
    """resolution: cells per axis; occupancy: (V, V, V) bool array.

    The grid covers the axis-aligned cube `extent` = (lo, hi) per axis,
    default [-1, 1].
    """

    resolution: int
    occupancy: np.ndarray
    extent: tuple = (-1.0, 1.0)

    def __post_init__(self):
        occ = np.asarray(self.occupancy, dtype=bool).reshape(
            self.resolution, self.resolution, self.resolution)
        object.__setattr__(self, "occupancy", occ)

    def centroids(self) -> np.ndarray:
        return voxel_centroids(self.resolution, self.extent)

    def iou(self, other: "VoxelGrid") -> float:
        if self.resolution != other.resolution:
            raise ValueError("resolution mismatch")
        inter = np.logical_and(self.occupancy, other.occupancy).sum()
        union = np.logical_or(self.occupancy, other.occupancy).sum()
        return float(inter) / float(union) if union else 1.0


def voxel_centroids(resolution: int, extent=(-1.0, 1.0)) -> np.ndarray:
    """(V^3, 3) cell-center coordinates, index order (i, j, k) row-major."""
    lo, hi = extent
    step = (hi - lo) / resolution
    axis = lo + step * (np.arange(resolution) + 0.5)
    g = np.stack(np.meshgrid(axis, axis, axis, indexing="ij"), axis=-1)
    return g.reshape(-1, 3)
