"""Fitting tri-plane fields to explicit shapes and posed images."""

from __future__ import annotations

import time
from dataclasses import dataclass, field as dc_field

import numpy as np

from .engine import AdamW, Tensor, clip, log, mean, power, smooth_l1, tensor, tsum
from .field import DEFAULT_D_MAX, HybridField, init_random
from .geometry import PosedImage, sample_training_points
from .recon import render_rays
from .seeds import derive_rng

_EPS = 1e-7


def scale_distance(kind: str, d, d_max: float = DEFAULT_D_MAX):
    """Map metric distances to (0, 1) regression targets.

    UDF: 1 - min(d, d_max) / d_max, so the surface maps to 1 and anything
    beyond d_max to 0. SDF: 1/2 - d / (2 d_max) clipped to [0, 1], keeping
    the surface at 1/2 with the inside above it.
    """
    d = np.asarray(d, dtype=np.float64)
    if kind == "UDF":
        return 1.0 - np.minimum(d, d_max) / d_max
    if kind == "SDF":
        return np.clip(0.5 - d / (2.0 * d_max), 0.0, 1.0)
    raise ValueError(f"no distance scaling for {kind} fields")


def loss_bce(pred: Tensor, target) -> Tensor:
    t = tensor(np.asarray(target, dtype=np.float32).reshape(pred.shape))
    p = clip(pred, _EPS, 1.0 - _EPS)
    return mean(t * log(p) + (1.0 - t) * log(1.0 - p)) * -1.0


def loss_focal(pred: Tensor, target, beta: float = 0.95,
               gamma: float = 2.0) -> Tensor:
    """Class-balanced focal loss for occupancy: down-weights the easy
    (mostly empty) cells via (1 - o)^gamma / o^gamma focusing terms."""
    t = tensor(np.asarray(target, dtype=np.float32).reshape(pred.shape))
    o = clip(pred, _EPS, 1.0 - _EPS)
    pos = power(1.0 - o, gamma) * t * log(o) * beta
    neg = power(o, gamma) * (1.0 - t) * log(1.0 - o) * (1.0 - beta)
    return mean(pos + neg) * -1.0


@dataclass(frozen=True)
class FitConfig:
    steps: int
    batch_size: int = 50_000
    pool_size: int = 600_000
    lr: float = 1e-3
    plane_lr_scale: float = 5.0     # planes train at 5e-3
    channels: int = 16
    plane_res: int = 32
    d_max: float = DEFAULT_D_MAX
    focal_beta: float = 0.95
    focal_gamma: float = 2.0
    n_ray_samples: int = 96


_DEFAULT_STEPS = {"UDF": 1000, "SDF": 600, "OF": 1000, "RF": 1500}


def default_config(kind: str, **overrides) -> FitConfig:
    cfg = dict(steps=_DEFAULT_STEPS[kind])
    if kind == "RF":
        cfg["batch_size"] = 128
        cfg["pool_size"] = 0
    cfg.update(overrides)
    return FitConfig(**cfg)


@dataclass
class FitReport:
    kind: str
    steps: int
    final_loss: float
    seconds: float
    losses: list = dc_field(default_factory=list)


def _cosine_lr(cfg: FitConfig, step: int) -> float:
    """Cosine decay from cfg.lr to 0 over the schedule; the late low-lr
    polish removes spurious floaters and background haze that a constant
    rate leaves behind."""
    return cfg.lr * 0.5 * (1.0 + np.cos(np.pi * step / cfg.steps))


def _make_optimizer(field: HybridField, cfg: FitConfig) -> AdamW:
    return AdamW([(field.mlp.parameters(), 1.0),
                  ([field.triplane.tensor], cfg.plane_lr_scale)],
                 weight_decay=0.0)


def fit_field(shape, kind: str, cfg: FitConfig | None = None,
              seed: int = 0) -> tuple[HybridField, FitReport]:
    """Fit a UDF/SDF/OF field to an explicit shape.

    `shape` is a PointCloud (UDF), TriMesh (SDF) or VoxelGrid (OF); a
    stratified point pool with ground-truth targets is drawn once, then
    minibatches of `batch_size` points run through BCE (distance fields)
    or focal loss (occupancy).
    """
    if kind == "RF":
        raise ValueError("radiance fields fit from images; use fit_rf")
    cfg = cfg or default_config(kind)
    points, raw = sample_training_points(shape, kind, cfg.pool_size, seed)
    if kind == "OF":
        targets = raw.astype(np.float64)
    else:
        targets = scale_distance(kind, raw, cfg.d_max)
    field = init_random(kind, channels=cfg.channels, height=cfg.plane_res,
                        width=cfg.plane_res, seed=seed, d_max=cfg.d_max)
    opt = _make_optimizer(field, cfg)
    rng = derive_rng(seed, "fit_batches", kind)
    points = points.astype(np.float32)
    targets = targets.astype(np.float32)

    t_start = time.perf_counter()
    losses = []
    for step in range(cfg.steps):
        idx = rng.integers(0, len(points), size=min(cfg.batch_size, len(points)))
        pred = field.forward(points[idx])
        if kind == "OF":
            loss = loss_focal(pred, targets[idx], cfg.focal_beta, cfg.focal_gamma)
        else:
            loss = loss_bce(pred, targets[idx])
        opt.zero_grad()
        loss.backward()
        opt.step(_cosine_lr(cfg, step))
        losses.append(loss.item())
    report = FitReport(kind, cfg.steps, losses[-1],
                       time.perf_counter() - t_start, losses)
    return field, report


def fit_rf(images: list[PosedImage], cfg: FitConfig | None = None,
           seed: int = 0) -> tuple[HybridField, FitReport]:
    """Fit a radiance field to posed images.

    Each step picks one view, draws `batch_size` random pixel rays, volume
    renders them and applies a smooth L1 loss against the ground truth.
    """
    if not images:
        raise ValueError("need at least one posed image")
    cfg = cfg or default_config("RF")
    field = init_random("RF", channels=cfg.channels, height=cfg.plane_res,
                        width=cfg.plane_res, seed=seed, d_max=cfg.d_max)
    opt = _make_optimizer(field, cfg)
    rng = derive_rng(seed, "fit_batches", "RF")

    t_start = time.perf_counter()
    losses = []
    for step in range(cfg.steps):
        view = images[int(rng.integers(len(images)))]
        cam = view.camera
        rows = rng.integers(0, cam.height, size=cfg.batch_size)
        cols = rng.integers(0, cam.width, size=cfg.batch_size)
        origins, dirs = cam.rays(rows * cam.width + cols)
        color = render_rays(field, origins, dirs, n_samples=cfg.n_ray_samples)
        gt = view.pixels[rows, cols].astype(np.float32)
        loss = mean(smooth_l1(color, tensor(gt)))
        opt.zero_grad()
        loss.backward()
        opt.step(_cosine_lr(cfg, step))
        losses.append(loss.item())
    report = FitReport("RF", cfg.steps, losses[-1],
                       time.perf_counter() - t_start, losses)
    return field, report
