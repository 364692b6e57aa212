"""Reconstruction quality metrics: Chamfer distance, F-score, PSNR."""

from __future__ import annotations

import math

import numpy as np
from scipy.spatial import cKDTree

from .pointcloud import PointCloud


def _nn_dists(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    d, _ = cKDTree(b).query(a)
    return d


def chamfer(pc_a: PointCloud, pc_b: PointCloud) -> float:
    """Symmetric mean nearest-neighbor distance, reported x1000.

    Coordinates are assumed unit-sphere normalized; the x1000 scaling makes
    values mm-like without claiming a metric unit.
    """
    if len(pc_a) == 0 or len(pc_b) == 0:
        raise ValueError("chamfer requires non-empty clouds")
    d_ab = _nn_dists(pc_a.points, pc_b.points).mean()
    d_ba = _nn_dists(pc_b.points, pc_a.points).mean()
    return 1000.0 * 0.5 * (d_ab + d_ba)


def fscore(pc_a: PointCloud, pc_b: PointCloud, tau: float = 0.01) -> float:
    """F-score (percent) at distance threshold tau.

    Precision: fraction of A within tau of B; recall: fraction of B within
    tau of A; harmonic mean, scaled to percent.
    """
    if len(pc_a) == 0 or len(pc_b) == 0:
        raise ValueError("fscore requires non-empty clouds")
    precision = float((_nn_dists(pc_a.points, pc_b.points) <= tau).mean())
    recall = float((_nn_dists(pc_b.points, pc_a.points) <= tau).mean())
    if precision + recall == 0:
        return 0.0
    return 100.0 * 2 * precision * recall / (precision + recall)


def psnr(img_a: np.ndarray, img_b: np.ndarray) -> float:
    """10*log10(1/MSE) over all channels; inf for identical images."""
    a = np.asarray(img_a, dtype=np.float64)
    b = np.asarray(img_b, dtype=np.float64)
    if a.shape != b.shape:
        raise ValueError(f"image shapes differ: {a.shape} vs {b.shape}")
    mse = float(np.mean((a - b) ** 2))
    if mse == 0:
        return math.inf
    return 10.0 * math.log10(1.0 / mse)
