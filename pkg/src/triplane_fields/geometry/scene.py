"""Analytic colored scenes and a sphere-tracing ray renderer.

Ground-truth image supervision for radiance-field fitting: scenes are
unions of sphere/box/torus primitives with per-primitive albedo, rendered
with Lambertian headlight shading on a white background.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .camera import Camera, PosedImage

WHITE = np.array([1.0, 1.0, 1.0])


@dataclass(frozen=True)
class ScenePrimitive:
    kind: str                   # sphere | box | torus
    center: tuple
    params: tuple               # sphere: (r,); box: (hx,hy,hz); torus: (R, r)
    albedo: tuple               # RGB in [0, 1]

    def sdf(self, p: np.ndarray) -> np.ndarray:
        q = p - np.asarray(self.center)
        if self.kind == "sphere":
            return np.linalg.norm(q, axis=-1) - self.params[0]
        if self.kind == "box":
            h = np.asarray(self.params)
            d = np.abs(q) - h
            outside = np.linalg.norm(np.maximum(d, 0), axis=-1)
            inside = np.minimum(d.max(axis=-1), 0)
            return outside + inside
        if self.kind == "torus":
            R, r = self.params
            rho = np.hypot(q[..., 0], q[..., 1])
            return np.hypot(rho - R, q[..., 2]) - r
        raise ValueError(f"unknown primitive kind {self.kind!r}")


@dataclass(frozen=True)
class AnalyticScene:
    primitives: list

    def sdf(self, p: np.ndarray) -> np.ndarray:
        return np.min(np.stack([prim.sdf(p) for prim in self.primitives]), axis=0)

    def nearest(self, p: np.ndarray) -> np.ndarray:
        """Index of the closest primitive per point."""
        return np.argmin(np.stack([prim.sdf(p) for prim in self.primitives]), axis=0)

    def normal(self, p: np.ndarray, h: float = 1e-5) -> np.ndarray:
        n = np.zeros_like(p)
        for ax in range(3):
            dp = np.zeros(3)
            dp[ax] = h
            n[:, ax] = (self.sdf(p + dp) - self.sdf(p - dp)) / (2 * h)
        norm = np.linalg.norm(n, axis=1, keepdims=True)
        return np.divide(n, norm, out=np.zeros_like(n), where=norm > 0)


def render_analytic(scene: AnalyticScene, camera: Camera,
                    max_steps: int = 128, t_max: float = 6.0,
                    eps: float = 1e-4) -> PosedImage:
    """Sphere-trace every pixel ray; Lambert headlight on hit, white on miss."""
    origins, dirs = camera.rays()
    n = len(dirs)
    t = np.zeros(n)
    hit = np.zeros(n, dtype=bool)
    active = np.ones(n, dtype=bool)
    for _ in range(max_steps):
        if not active.any():
            break
        p = origins[active] + t[active, None] * dirs[active]
        d = scene.sdf(p)
        newly_hit = d < eps
        idx = np.flatnonzero(active)
        hit[idx[newly_hit]] = True
        t[idx] += np.maximum(d, eps)
        active[idx[newly_hit]] = False
        active[idx[~newly_hit][t[idx[~newly_hit]] > t_max]] = False
        escaped = t[idx] > t_max
        active[idx[escaped]] = False

    colors = np.tile(WHITE, (n, 1))
    if hit.any():
        p_hit = origins[hit] + t[hit, None] * dirs[hit]
        normals = scene.normal(p_hit)
        lambert = np.maximum(0.0, -(normals * dirs[hit]).sum(axis=1))
        which = scene.nearest(p_hit)
        albedos = np.array([scene.primitives[i].albedo for i in which])
        colors[hit] = albedos * lambert[:, None]
    img = colors.reshape(camera.height, camera.width, 3).clip(0.0, 1.0)
    return PosedImage(camera, img)
