"""Tri-plane hybrid field: feature planes + sine MLP decoder.

A field maps [-1, 1]^3 coordinates to a value: a point's feature is the
sum of bilinear lookups on three orthogonal C x H x W planes (xy, xz, yz),
concatenated with a sinusoidal positional encoding and decoded by a small
sine-activated MLP. Distance/occupancy heads end in a sigmoid; the
radiance head emits sigmoid RGB plus softplus density.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass, field as dc_field
from pathlib import Path

import numpy as np

from .engine import Tensor, concat, matmul, sigmoid, sin, softplus, tensor, triplane_interp
from .seeds import derive_rng

FIELD_KINDS = ("UDF", "SDF", "OF", "RF")
TPNF_MAGIC = b"TPNF"
TPNF_VERSION = 1
POSENC_OCTAVES = 10          # 3 + 6 * 10 = 63-wide encoding
OMEGA0 = 30.0
DEFAULT_D_MAX = 0.5


class FormatError(ValueError):
    pass


@dataclass(frozen=True)
class PosEncConfig:
    octaves: int = POSENC_OCTAVES
    include_identity: bool = True

    @property
    def width(self) -> int:
        return (3 if self.include_identity else 0) + 6 * self.octaves


def posenc(points, cfg: PosEncConfig = PosEncConfig()):
    """[p, sin(2^l pi p), cos(2^l pi p) for l < octaves]; differentiable."""
    p = points if isinstance(points, Tensor) else tensor(points)
    parts = [p] if cfg.include_identity else []
    half_pi = np.pi / 2
    for l in range(cfg.octaves):
        freq = (2.0 ** l) * np.pi
        parts.append(sin(p * freq))
        parts.append(sin(p * freq + half_pi))   # cos
    return concat(parts, axis=1)


class TriPlane:
    """Three stacked feature planes as one (3, C, H, W) parameter tensor."""

    def __init__(self, values, requires_grad=False):
        if isinstance(values, Tensor):
            self.tensor = values
        else:
            self.tensor = tensor(np.asarray(values), requires_grad=requires_grad)
        if self.tensor.data.ndim != 4 or self.tensor.shape[0] != 3:
            raise ValueError(f"tri-plane must be (3, C, H, W), got {self.tensor.shape}")

    @property
    def channels(self):
        return self.tensor.shape[1]

    @property
    def height(self):
        return self.tensor.shape[2]

    @property
    def width(self):
        return self.tensor.shape[3]

    @property
    def data(self):
        return self.tensor.data

    def permuted(self, permutation) -> "TriPlane":
        """Apply the same channel permutation to all three planes."""
        perm = np.asarray(permutation)
        return TriPlane(self.data[:, perm].copy())


def interpolate(triplane: TriPlane, points):
    """Summed bilinear feature lookup; accepts arrays or Tensors."""
    p = points if isinstance(points, Tensor) else tensor(points)
    return triplane_interp(triplane.tensor, p)


class SinMLP:
    """sin(omega0 * (Wx + b)) hidden layers with a linear head."""

    def __init__(self, weights, biases, omega0: float = OMEGA0):
        self.weights = list(weights)   # Tensors (n_in, n_out)
        self.biases = list(biases)
        self.omega0 = omega0

    @property
    def in_width(self):
        return self.weights[0].shape[0]

    @property
    def out_width(self):
        return self.weights[-1].shape[1]

    @property
    def hidden_width(self):
        return self.weights[0].shape[1]

    @property
    def n_hidden(self):
        return len(self.weights) - 1

    def parameters(self):
        return self.weights + self.biases

    def __call__(self, x: Tensor) -> Tensor:
        h = x
        for W, b in zip(self.weights[:-1], self.biases[:-1]):
            h = sin((matmul(h, W) + b) * self.omega0)
        return matmul(h, self.weights[-1]) + self.biases[-1]


@dataclass
class HybridField:
    triplane: TriPlane
    mlp: SinMLP
    kind: str
    d_max: float = DEFAULT_D_MAX
    seed: int = 0
    posenc_cfg: PosEncConfig = dc_field(default_factory=PosEncConfig)

    def __post_init__(self):
        if self.kind not in FIELD_KINDS:
            raise ValueError(f"field kind must be one of {FIELD_KINDS}, got {self.kind!r}")
        out = 4 if self.kind == "RF" else 1
        if self.mlp.out_width != out:
            raise ValueError(f"{self.kind} head must have width {out}, "
                             f"got {self.mlp.out_width}")
        expected_in = self.triplane.channels + self.posenc_cfg.width
        if self.mlp.in_width != expected_in:
            raise ValueError(f"MLP input width {self.mlp.in_width} != "
                             f"channels + encoding = {expected_in}")
        if self.kind in ("UDF", "SDF") and self.d_max <= 0:
            raise ValueError("d_max must be positive for distance fields")

    def parameters(self):
        return [self.triplane.tensor] + self.mlp.parameters()

    def forward(self, points) -> Tensor:
        """Field values per point: (N, 1) in (0, 1) for UDF/SDF/OF;
        (N, 4) with RGB in (0, 1) and density >= 0 for RF."""
        p = points if isinstance(points, Tensor) else tensor(points)
        feat = triplane_interp(self.triplane.tensor, p)
        pe = posenc(p, self.posenc_cfg)
        raw = self.mlp(concat([feat, pe], axis=1))
        if self.kind == "RF":
            rgb = sigmoid(raw[:, :3])
            density = softplus(raw[:, 3:4])
            return concat([rgb, density], axis=1)
        return sigmoid(raw)

    def __call__(self, points) -> Tensor:
        return self.forward(points)


def field_forward(field: HybridField, points) -> Tensor:
    return field.forward(points)


def init_random(kind: str, channels: int = 16, height: int = 32, width: int = 32,
                seed: int = 0, hidden_width: int = 64, n_hidden: int = 3,
                plane_std: float = 0.1, d_max: float = DEFAULT_D_MAX,
                dtype=np.float32, requires_grad: bool = True,
                posenc_cfg: PosEncConfig = PosEncConfig()) -> HybridField:
    """Fresh field: Gaussian tri-planes, SIREN-style MLP initialization.

    First layer U(-1/n, 1/n); deeper layers U(+-sqrt(6/n)/omega0), n being
    the layer fan-in.
    """
    rng = derive_rng(seed, "field_init", kind)
    planes = rng.normal(0.0, plane_std,
                        size=(3, channels, height, width)).astype(dtype)
    in_width = channels + posenc_cfg.width
    out_width = 4 if kind == "RF" else 1
    dims = [in_width] + [hidden_width] * n_hidden + [out_width]
    weights, biases = [], []
    for li, (n_in, n_out) in enumerate(zip(dims[:-1], dims[1:])):
        if li == 0:
            bound = 1.0 / n_in
        else:
            bound = np.sqrt(6.0 / n_in) / OMEGA0
        weights.append(tensor(rng.uniform(-bound, bound, size=(n_in, n_out)).astype(dtype),
                              requires_grad=requires_grad))
        biases.append(tensor(rng.uniform(-bound, bound, size=(n_out,)).astype(dtype),
                             requires_grad=requires_grad))
    if kind == "RF":
        # start nearly transparent (softplus(-4) ~ 0.02 density) so that
        # free space converges to the background instead of leaving haze
        biases[-1].data[3] = -4.0
    triplane = TriPlane(tensor(planes, requires_grad=requires_grad))
    return HybridField(triplane, SinMLP(weights, biases), kind,
                       d_max=d_max, seed=seed, posenc_cfg=posenc_cfg)


def param_count(field: HybridField) -> tuple:
    """(tri-plane parameter count, MLP parameter count)."""
    tp = int(np.prod(field.triplane.tensor.shape))
    mlp = int(sum(np.prod(t.shape) for t in field.mlp.parameters()))
    return tp, mlp


# ---------------------------------------------------------------------------
# TPNF serialization

_KIND_CODE = {k: i for i, k in enumerate(FIELD_KINDS)}


def serialize(field: HybridField, path):
    """Write the TPNF binary: header, f32 planes (xy, xz, yz channel-major),
    then MLP layers in order (weights row-major, then bias)."""
    if field.posenc_cfg != PosEncConfig():
        raise FormatError("TPNF files fix the 63-wide positional encoding")
    tp = field.triplane
    with open(path, "wb") as fh:
        fh.write(TPNF_MAGIC)
        fh.write(struct.pack("<HBHHH", TPNF_VERSION, _KIND_CODE[field.kind],
                             tp.channels, tp.height, tp.width))
        fh.write(struct.pack("<BH", field.mlp.n_hidden, field.mlp.hidden_width))
        fh.write(struct.pack("<fQ", field.d_max, field.seed))
        fh.write(tp.data.astype("<f4").tobytes())
        for W, b in zip(field.mlp.weights, field.mlp.biases):
            fh.write(W.data.astype("<f4").tobytes())
            fh.write(b.data.astype("<f4").tobytes())


def deserialize(path, requires_grad: bool = False, dtype=np.float32) -> HybridField:
    raw = Path(path).read_bytes()
    if len(raw) < 28 or raw[:4] != TPNF_MAGIC:
        raise FormatError(f"{path}: bad TPNF magic")
    version, kind_code, C, H, W = struct.unpack_from("<HBHHH", raw, 4)
    if version != TPNF_VERSION:
        raise FormatError(f"{path}: unsupported TPNF version {version}")
    if kind_code >= len(FIELD_KINDS):
        raise FormatError(f"{path}: unknown field kind code {kind_code}")
    n_hidden, hidden_width = struct.unpack_from("<BH", raw, 13)
    d_max, seed = struct.unpack_from("<fQ", raw, 16)
    kind = FIELD_KINDS[kind_code]
    offset = 28
    if (len(raw) - offset) % 4:
        raise FormatError(f"{path}: payload is not a whole number of floats")
    blob = np.frombuffer(raw, dtype="<f4", offset=offset)

    def take(count, shape):
        nonlocal cursor
        if cursor + count > blob.size:
            raise FormatError(f"{path}: truncated payload")
        out = blob[cursor:cursor + count].reshape(shape).astype(dtype, copy=True)
        cursor += count
        return out

    cursor = 0
    planes = take(3 * C * H * W, (3, C, H, W))
    in_width = C + PosEncConfig().width
    out_width = 4 if kind == "RF" else 1
    dims = [in_width] + [hidden_width] * n_hidden + [out_width]
    weights, biases = [], []
    for n_in, n_out in zip(dims[:-1], dims[1:]):
        weights.append(tensor(take(n_in * n_out, (n_in, n_out)),
                              requires_grad=requires_grad))
        biases.append(tensor(take(n_out, (n_out,)), requires_grad=requires_grad))
    if cursor != blob.size:
        raise FormatError(f"{path}: {blob.size - cursor} trailing floats")
    triplane = TriPlane(tensor(planes, requires_grad=requires_grad))
    return HybridField(triplane, SinMLP(weights, biases), kind,
                       d_max=float(d_max), seed=int(seed))
