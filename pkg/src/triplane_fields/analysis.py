"""Introspection experiments on fitted tri-planes.

Channel-sum visualization, spatial shuffling (destroying the maps' spatial
structure while keeping the channel multiset), and the brute-force search
for the channel permutation aligning two independently fitted fields.
"""

from __future__ import annotations

from itertools import permutations as iter_permutations

import numpy as np

from .engine import no_grad
from .field import OMEGA0, HybridField, TriPlane, posenc
from .fitting import scale_distance
from .geometry import gt_udf, gt_sdf, sample_surface
from .seeds import derive_rng

PLANE_NAMES = ("xy", "xz", "yz")


def identity_permutation(channels: int) -> np.ndarray:
    return np.arange(channels)


def inverse_permutation(perm) -> np.ndarray:
    return np.argsort(np.asarray(perm))


# ---------------------------------------------------------------------------
# Visualization

def channel_image(triplane: TriPlane, plane: str = "xy") -> np.ndarray:
    """Sum a plane's channels per pixel, min-max normalized to [0, 1].

    A flat (constant) sum maps to a uniform 0.5 image.
    """
    if plane not in PLANE_NAMES:
        raise ValueError(f"plane must be one of {PLANE_NAMES}, got {plane!r}")
    img = triplane.data[PLANE_NAMES.index(plane)].sum(axis=0)
    lo, hi = img.min(), img.max()
    if hi - lo < 1e-12:
        return np.full_like(img, 0.5, dtype=np.float64)
    return (img - lo) / (hi - lo)


def channel_images(triplane: TriPlane, plane: str = "xy") -> np.ndarray:
    """(C, H, W) per-channel min-max normalized images."""
    if plane not in PLANE_NAMES:
        raise ValueError(f"plane must be one of {PLANE_NAMES}, got {plane!r}")
    maps = triplane.data[PLANE_NAMES.index(plane)].astype(np.float64)
    lo = maps.min(axis=(1, 2), keepdims=True)
    hi = maps.max(axis=(1, 2), keepdims=True)
    flat = (hi - lo) < 1e-12
    safe = np.where(flat, 1.0, hi - lo)
    out = (maps - lo) / safe
    return np.where(flat, 0.5, out)


# ---------------------------------------------------------------------------
# Spatial shuffling

def spatial_site_permutations(seed: int, height: int, width: int) -> np.ndarray:
    """(3, H*W) independent site permutations, one per plane."""
    rng = derive_rng(seed, "spatial_shuffle")
    return np.stack([rng.permutation(height * width) for _ in range(3)])


def apply_spatial_permutation(triplane: TriPlane, perms,
                              inverse: bool = False) -> TriPlane:
    perms = np.asarray(perms)
    three, C, H, W = triplane.data.shape
    out = np.empty_like(triplane.data)
    for p in range(3):
        perm = inverse_permutation(perms[p]) if inverse else perms[p]
        flat = triplane.data[p].reshape(C, H * W)
        out[p] = flat[:, perm].reshape(C, H, W)
    return TriPlane(out)


def spatial_shuffle(triplane: TriPlane, seed: int = 0) -> TriPlane:
    """Shuffle each plane's spatial sites (all channels moved together);
    channel order is untouched, so per-plane feature multisets survive."""
    perms = spatial_site_permutations(seed, triplane.height, triplane.width)
    return apply_spatial_permutation(triplane, perms)


# ---------------------------------------------------------------------------
# Brute-force channel-permutation search

MAX_SEARCH_CHANNELS = 9


def search_eval_points(shape, kind: str, n_points: int = 10_000, seed: int = 0):
    """(points, targets) for the search objective: half the points hug the
    surface (sigma = 0.01 jitter), half are uniform in the cube."""
    rng = derive_rng(seed, "perm_search_points")
    n_near = n_points // 2
    surf = sample_surface(shape, n_near, seed=seed).points
    near = np.clip(surf + rng.normal(0.0, 0.01, surf.shape), -1.0, 1.0)
    uniform = rng.uniform(-1.0, 1.0, (n_points - n_near, 3))
    pts = np.concatenate([near, uniform])
    if kind == "SDF":
        d = gt_sdf(shape, pts)
    elif kind == "UDF":
        d = gt_udf(sample_surface(shape, 100_000, seed=seed + 1), pts)
    else:
        raise ValueError("the search objective is defined for distance fields")
    return pts, scale_distance(kind, d)


def excess_bce(pred, targets):
    """Mean BCE minus the soft-label entropy floor (the KL divergence from
    targets to predictions). Soft distance labels keep plain BCE well above
    zero even for a perfect decoder, which would swamp loss ratios between
    candidate permutations; the floor is constant across candidates."""
    p = np.clip(pred, 1e-7, 1.0 - 1e-7)
    t = np.clip(targets, 1e-7, 1.0 - 1e-7)
    bce = -(targets * np.log(p) + (1.0 - targets) * np.log(1.0 - p))
    ent = -(t * np.log(t) + (1.0 - t) * np.log(1.0 - t))
    return (bce - ent).mean(axis=-1)


def permutation_search(triplane: TriPlane, field: HybridField, eval_points,
                       targets, chunk: int = 64):
    """Try every channel permutation of `triplane` under `field`'s decoder.

    Exhaustive over C! candidates (C <= 9), scored by mean BCE against
    `targets`; ties go to the lexicographically smallest permutation.
    Returns (best permutation, loss table sorted by loss) where the table
    rows are (permutation tuple, loss).

    The per-point plane features are interpolated once: permuting the
    tri-plane's channels is a column permutation of that feature matrix,
    equivalently a row gather of the decoder's first-layer feature block,
    so each candidate costs one small matrix product per layer.
    """
    C = triplane.channels
    if C > MAX_SEARCH_CHANNELS:
        raise ValueError(
            f"{C}! permutations is out of reach; refit with <= "
            f"{MAX_SEARCH_CHANNELS} channels for the search")
    pts = np.asarray(eval_points, dtype=np.float32)
    targets = np.asarray(targets, dtype=np.float32)
    mlp = field.mlp
    with no_grad():
        from .field import interpolate
        feats = interpolate(triplane, pts).data
        pe = posenc(pts).data.astype(np.float32)
    W1 = mlp.weights[0].data
    b1 = mlp.biases[0].data
    W1f, W1pe = W1[:C], W1[C:]
    base = pe @ W1pe + b1                         # permutation-independent

    perms = np.array(list(iter_permutations(range(C))), dtype=np.intp)
    losses = np.empty(len(perms))
    for lo in range(0, len(perms), chunk):
        batch = perms[lo:lo + chunk]
        # feats[:, perm] @ W1f == feats @ W1f[argsort(perm)]
        Wg = W1f[np.argsort(batch, axis=1)]       # (P, C, hidden)
        h = np.sin(OMEGA0 * (np.tensordot(feats, Wg, axes=([1], [1]))
                             + base[:, None, :]))  # (N, P, hidden)
        h = np.swapaxes(h, 0, 1)                   # (P, N, hidden)
        for Wl, bl in zip(mlp.weights[1:-1], mlp.biases[1:-1]):
            h = np.sin(OMEGA0 * (h @ Wl.data + bl.data))
        raw = h @ mlp.weights[-1].data + mlp.biases[-1].data
        pred = 1.0 / (1.0 + np.exp(-raw[..., 0]))
        losses[lo:lo + chunk] = excess_bce(pred, targets)

    order = np.lexsort(tuple(perms[:, c] for c in reversed(range(C))) + (losses,))
    table = [(tuple(int(x) for x in perms[i]), float(losses[i])) for i in order]
    return np.asarray(table[0][0], dtype=np.intp), table


def with_triplane(field: HybridField, triplane: TriPlane) -> HybridField:
    """Same decoder, different (e.g. permuted) planes."""
    return HybridField(triplane, field.mlp, field.kind, d_max=field.d_max,
                       seed=field.seed, posenc_cfg=field.posenc_cfg)
