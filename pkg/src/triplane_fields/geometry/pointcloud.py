"""Point cloud container."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np


@dataclass(frozen=True)
class PointCloud:
    """points: (N, 3) float array; labels: optional (N,) int part ids."""

    points: np.ndarray
    labels: np.ndarray | None = None

    def __post_init__(self):
        p = np.asarray(self.points, dtype=np.float64).reshape(-1, 3)
        object.__setattr__(self, "points", p)
        if self.labels is not None:
            lab = np.asarray(self.labels, dtype=np.int64)
            if len(lab) != len(p):
                raise ValueError("labels length must match point count")
            object.__setattr__(self, "labels", lab)

    def __len__(self):
        return len(self.points)

    def replace_points(self, pts) -> "PointCloud":
        return PointCloud(pts, self.labels)
