"""Pinhole cameras and posed RGB images."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np


@dataclass(frozen=True)
class Camera:
    """Pinhole camera with a camera-to-world pose.

    Convention: +z is the viewing direction, +x right, +y down.
    """

    focal: float
    width: int
    height: int
    rotation: np.ndarray   # (3, 3) camera-to-world
    translation: np.ndarray  # (3,) camera center in world coords
    cx: float | None = None
    cy: float | None = None

    def __post_init__(self):
        R = np.asarray(self.rotation, dtype=np.float64).reshape(3, 3)
        t = np.asarray(self.translation, dtype=np.float64).reshape(3)
        if self.focal <= 0:
            raise ValueError("focal must be positive")
        if np.abs(R.T @ R - np.eye(3)).max() > 1e-6:
            raise ValueError("rotation must be orthonormal")
        object.__setattr__(self, "rotation", R)
        object.__setattr__(self, "translation", t)
        if self.cx is None:
            object.__setattr__(self, "cx", self.width / 2.0)
        if self.cy is None:
            object.__setattr__(self, "cy", self.height / 2.0)

    def rays(self, pixel_indices: np.ndarray | None = None):
        """Return (origins, directions) for pixel centers.

        pixel_indices: optional (N,) flat indices (row-major); default all
        pixels. Directions are unit length.
        """
        if pixel_indices is None:
            pixel_indices = np.arange(self.width * self.height)
        pixel_indices = np.asarray(pixel_indices)
        v, u = np.divmod(pixel_indices, self.width)
        x = (u + 0.5 - self.cx) / self.focal
        y = (v + 0.5 - self.cy) / self.focal
        d_cam = np.stack([x, y, np.ones_like(x)], axis=1)
        d_world = d_cam @ self.rotation.T
        d_world /= np.linalg.norm(d_world, axis=1, keepdims=True)
        origins = np.broadcast_to(self.translation, d_world.shape)
        return origins, d_world

    def to_dict(self) -> dict:
        return {
            "focal": self.focal, "width": self.width, "height": self.height,
            "cx": self.cx, "cy": self.cy,
            "rotation": self.rotation.tolist(),
            "translation": self.translation.tolist(),
        }

    @staticmethod
    def from_dict(d: dict) -> "Camera":
        return Camera(d["focal"], d["width"], d["height"],
                      np.array(d["rotation"]), np.array(d["translation"]),
                      d.get("cx"), d.get("cy"))


@dataclass(frozen=True)
class PosedImage:
    camera: Camera
    pixels: np.ndarray  # (H, W, 3) in [0, 1]

    def __post_init__(self):
        px = np.asarray(self.pixels, dtype=np.float64)
        if px.shape != (self.camera.height, self.camera.width, 3):
            raise ValueError(f"pixel array {px.shape} does not match camera "
                             f"{(self.camera.height, self.camera.width, 3)}")
        if px.min() < 0 or px.max() > 1:
            raise ValueError("pixel values must lie in [0, 1]")
        object.__setattr__(self, "pixels", px)


def look_at(eye: np.ndarray, target=(0.0, 0.0, 0.0), up=(0.0, 0.0, 1.0)) -> np.ndarray:
    """Camera-to-world rotation gazing from eye toward target."""
    eye = np.asarray(eye, dtype=np.float64)
    fwd = np.asarray(target, dtype=np.float64) - eye
    fwd /= np.linalg.norm(fwd)
    up = np.asarray(up, dtype=np.float64)
    right = np.cross(fwd, up)
    if np.linalg.norm(right) < 1e-9:
        right = np.cross(fwd, np.array([1.0, 0.0, 0.0]))
    right /= np.linalg.norm(right)
    down = np.cross(fwd, right)
    return np.stack([right, down, fwd], axis=1)


def orbit_cameras(n_views: int, radius: float = 2.5, width: int = 64,
                  height: int = 64, focal: float | None = None) -> list[Camera]:
    """n_views cameras on two interleaved elevation rings, gazing at the origin."""
    if focal is None:
        focal = 1.2 * width
    cams = []
    for i in range(n_views):
        az = 2 * np.pi * i / n_views
        elev = np.deg2rad(20.0 + 25.0 * (i % 2))
        eye = radius * np.array([np.cos(az) * np.cos(elev),
                                 np.sin(az) * np.cos(elev),
                                 np.sin(elev)])
        cams.append(Camera(focal, width, height, look_at(eye), eye))
    return cams
