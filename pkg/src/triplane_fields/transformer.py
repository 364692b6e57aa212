"""Transformer that consumes tri-plane feature maps directly.

Each of the 3C feature channels becomes one token (an unrolled square
crop of the plane), so the encoder sees a set of 3C tokens. No positional
encoding is added anywhere, which makes the whole pipeline invariant to
channel permutations: permuting the planes' channels only reorders the
token set, the encoder is equivariant to that reordering, and the final
max-pool removes it entirely.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace

import numpy as np

from .engine import (AdamW, OneCycleSchedule, Tensor, clip, concat, gather,
                     layer_norm, log, matmul, mean, no_grad, reshape, softmax,
                     tensor, tmax, transpose, tsum)
from .field import PosEncConfig, posenc
from .seeds import derive_rng


@dataclass(frozen=True)
class EncoderConfig:
    d_model: int = 128
    n_layers: int = 4
    n_heads: int = 4
    d_ff: int = 256
    crop: int = 30
    n_classes: int = 3
    n_parts: int = 0                # 0 = no segmentation decoder
    dec_layers: int = 2
    dec_heads: int = 2


def paper_scale_config(**overrides) -> EncoderConfig:
    """Full-scale settings: 512-wide, 8-layer encoder with 4 heads and a
    4-layer, 2-head segmentation decoder."""
    cfg = EncoderConfig(d_model=512, n_layers=8, n_heads=4, d_ff=2048,
                        dec_layers=4)
    return replace(cfg, **overrides)


# ---------------------------------------------------------------------------
# Tokenization

def tokenize(planes: np.ndarray, crop: int = 30, rng=None) -> np.ndarray:
    """(3, C, H, W) feature planes -> (3C, crop*crop) tokens.

    A single crop offset is shared by all channels so their spatial
    alignment survives; pass an rng for a random training crop, None for
    the deterministic centered one.
    """
    three, C, H, W = planes.shape
    if crop > H or crop > W:
        raise ValueError(f"crop {crop} exceeds plane resolution {H}x{W}")
    if rng is None:
        dy, dx = (H - crop) // 2, (W - crop) // 2
    else:
        dy = int(rng.integers(0, H - crop + 1))
        dx = int(rng.integers(0, W - crop + 1))
    patch = planes[:, :, dy:dy + crop, dx:dx + crop]
    return patch.reshape(three * C, crop * crop).astype(np.float32)


def batch_tokens(plane_list, crop: int = 30, rng=None) -> np.ndarray:
    return np.stack([tokenize(p, crop, rng) for p in plane_list])


# ---------------------------------------------------------------------------
# Model

class NFPModel:
    """Parameter container; all weights live in a flat name->Tensor dict
    so checkpoints are trivial."""

    def __init__(self, cfg: EncoderConfig, seed: int = 0):
        self.cfg = cfg
        self.params: dict[str, Tensor] = {}
        rng = derive_rng(seed, "nfp_init")
        D, F = cfg.d_model, cfg.d_ff
        self._linear_init(rng, "tok", cfg.crop * cfg.crop, D)
        for i in range(cfg.n_layers):
            self._attn_init(rng, f"enc{i}.attn", D)
            self._ln_init(f"enc{i}.ln1", D)
            self._linear_init(rng, f"enc{i}.ff1", D, F)
            self._linear_init(rng, f"enc{i}.ff2", F, D)
            self._ln_init(f"enc{i}.ln2", D)
        self._linear_init(rng, "cls", D, cfg.n_classes)
        if cfg.n_parts:
            q_in = PosEncConfig().width + cfg.n_classes
            self._linear_init(rng, "query", q_in, D)
            for i in range(cfg.dec_layers):
                self._attn_init(rng, f"dec{i}.self", D)
                self._ln_init(f"dec{i}.ln1", D)
                self._attn_init(rng, f"dec{i}.cross", D)
                self._ln_init(f"dec{i}.ln2", D)
                self._linear_init(rng, f"dec{i}.ff1", D, F)
                self._linear_init(rng, f"dec{i}.ff2", F, D)
                self._ln_init(f"dec{i}.ln3", D)
            self._linear_init(rng, "seg", D, cfg.n_parts)

    def _linear_init(self, rng, name, n_in, n_out):
        bound = math.sqrt(6.0 / (n_in + n_out))
        self.params[name + ".W"] = tensor(
            rng.uniform(-bound, bound, (n_in, n_out)).astype(np.float32),
            requires_grad=True)
        self.params[name + ".b"] = tensor(np.zeros(n_out, dtype=np.float32),
                                          requires_grad=True)

    def _attn_init(self, rng, name, D):
        for part in ("q", "k", "v", "o"):
            self._linear_init(rng, f"{name}.{part}", D, D)

    def _ln_init(self, name, D):
        self.params[name + ".g"] = tensor(np.ones(D, dtype=np.float32),
                                          requires_grad=True)
        self.params[name + ".b"] = tensor(np.zeros(D, dtype=np.float32),
                                          requires_grad=True)

    def parameters(self):
        return list(self.params.values())

    def state(self):
        return {k: v.data.copy() for k, v in self.params.items()}

    def load_state(self, state):
        for k, v in self.params.items():
            v.data[...] = state[k]


def _lin(p, name, x):
    return matmul(x, p[name + ".W"]) + p[name + ".b"]


def _relu(x):
    return clip(x, 0.0, np.inf)


def _mha(p, name, n_heads, q_in, kv_in):
    """Multi-head attention; q_in (B, Tq, D), kv_in (B, Tk, D)."""
    B, Tq, D = q_in.shape
    Tk = kv_in.shape[1]
    dh = D // n_heads

    def split(x, T):
        return transpose(reshape(x, (B, T, n_heads, dh)), (0, 2, 1, 3))

    q = split(_lin(p, name + ".q", q_in), Tq)
    k = split(_lin(p, name + ".k", kv_in), Tk)
    v = split(_lin(p, name + ".v", kv_in), Tk)
    scores = matmul(q, transpose(k, (0, 1, 3, 2))) * (1.0 / math.sqrt(dh))
    attn = softmax(scores, axis=-1)
    ctx = transpose(matmul(attn, v), (0, 2, 1, 3))
    return _lin(p, name + ".o", reshape(ctx, (B, Tq, D)))


def _encoder_layer(p, i, n_heads, x):
    # post-norm residual blocks
    x = layer_norm(x + _mha(p, f"enc{i}.attn", n_heads, x, x),
                   p[f"enc{i}.ln1.g"], p[f"enc{i}.ln1.b"])
    ff = _lin(p, f"enc{i}.ff2", _relu(_lin(p, f"enc{i}.ff1", x)))
    return layer_norm(x + ff, p[f"enc{i}.ln2.g"], p[f"enc{i}.ln2.b"])


def encode(model: NFPModel, tokens) -> Tensor:
    """(B, 3C, crop^2) token batch -> (B, 3C, d_model) memory."""
    t = tokens if isinstance(tokens, Tensor) else tensor(tokens)
    x = _lin(model.params, "tok", t)
    for i in range(model.cfg.n_layers):
        x = _encoder_layer(model.params, i, model.cfg.n_heads, x)
    return x


def classify(model: NFPModel, tokens) -> Tensor:
    """Class logits via max-pool over the token set."""
    pooled = tmax(encode(model, tokens), axis=1)
    return _lin(model.params, "cls", pooled)


def segment(model: NFPModel, tokens, query_points, class_ids) -> Tensor:
    """Part logits (B, Q, n_parts) for 3D query points on each shape.

    Queries are built from the points' positional encoding concatenated
    with a one-hot of the shape class, then refined by decoder blocks of
    self-attention, cross-attention into the encoder memory, and a feed
    forward, all post-normalized.
    """
    if not model.cfg.n_parts:
        raise ValueError("model was built without a segmentation decoder")
    p = model.params
    memory = encode(model, tokens)
    B, Q, _ = np.asarray(query_points).shape
    pe = posenc(np.asarray(query_points, dtype=np.float32).reshape(-1, 3)).data
    onehot = np.zeros((B, model.cfg.n_classes), dtype=np.float32)
    onehot[np.arange(B), np.asarray(class_ids)] = 1.0
    feats = np.concatenate(
        [pe.reshape(B, Q, -1), np.broadcast_to(onehot[:, None], (B, Q, model.cfg.n_classes))],
        axis=2).astype(np.float32)
    x = _lin(p, "query", tensor(feats))
    for i in range(model.cfg.dec_layers):
        h = model.cfg.dec_heads
        x = layer_norm(x + _mha(p, f"dec{i}.self", h, x, x),
                       p[f"dec{i}.ln1.g"], p[f"dec{i}.ln1.b"])
        x = layer_norm(x + _mha(p, f"dec{i}.cross", h, x, memory),
                       p[f"dec{i}.ln2.g"], p[f"dec{i}.ln2.b"])
        ff = _lin(p, f"dec{i}.ff2", _relu(_lin(p, f"dec{i}.ff1", x)))
        x = layer_norm(x + ff, p[f"dec{i}.ln3.g"], p[f"dec{i}.ln3.b"])
    return _lin(p, "seg", x)


def cross_entropy(logits: Tensor, labels) -> Tensor:
    """Mean negative log-likelihood; labels index the last axis."""
    labels = np.asarray(labels).reshape(-1)
    flat = reshape(logits, (-1, logits.shape[-1]))
    probs = clip(softmax(flat, axis=-1), 1e-12, 1.0)
    picked = log(probs)[np.arange(len(labels)), labels]
    return mean(picked) * -1.0


# ---------------------------------------------------------------------------
# Training loops

@dataclass(frozen=True)
class TrainConfig:
    epochs: int = 150
    batch_size: int = 256
    max_lr: float = 1e-4
    seed: int = 0


def seg_train_config(**overrides) -> TrainConfig:
    cfg = TrainConfig(epochs=75, batch_size=32)
    return replace(cfg, **overrides)


@dataclass
class TrainReport:
    epoch_losses: list
    val_scores: list
    best_epoch: int
    best_score: float


def train_classifier(model: NFPModel, train_set, val_set,
                     cfg: TrainConfig = TrainConfig()) -> TrainReport:
    """train_set/val_set: lists of ((3, C, H, W) planes, class id).

    Random crops augment training; validation uses center crops and the
    best-accuracy parameters are restored at the end.
    """
    rng = derive_rng(cfg.seed, "train_cls")
    planes = [p for p, _ in train_set]
    labels = np.array([c for _, c in train_set])
    steps_per_epoch = max(1, math.ceil(len(planes) / cfg.batch_size))
    sched = OneCycleSchedule(cfg.max_lr, cfg.epochs * steps_per_epoch)
    opt = AdamW(model.parameters(), weight_decay=1e-2)
    crop = model.cfg.crop

    losses, scores = [], []
    best = (-1.0, -1, None)
    step = 0
    for epoch in range(cfg.epochs):
        order = rng.permutation(len(planes))
        epoch_loss = 0.0
        for lo in range(0, len(order), cfg.batch_size):
            idx = order[lo:lo + cfg.batch_size]
            toks = np.stack([tokenize(planes[i], crop, rng) for i in idx])
            loss = cross_entropy(classify(model, toks), labels[idx])
            opt.zero_grad()
            loss.backward()
            step += 1
            opt.step(sched.lr(step))
            epoch_loss += loss.item() * len(idx)
        losses.append(epoch_loss / len(planes))
        acc = accuracy(model, val_set)
        scores.append(acc)
        if acc > best[0]:
            best = (acc, epoch, model.state())
    if best[2] is not None:
        model.load_state(best[2])
    return TrainReport(losses, scores, best[1], best[0])


def predict_class(model: NFPModel, plane_list, batch_size: int = 64) -> np.ndarray:
    out = []
    with no_grad():
        for lo in range(0, len(plane_list), batch_size):
            toks = batch_tokens(plane_list[lo:lo + batch_size], model.cfg.crop)
            out.append(np.argmax(classify(model, toks).data, axis=1))
    return np.concatenate(out) if out else np.zeros(0, dtype=int)


def accuracy(model: NFPModel, dataset) -> float:
    if not dataset:
        return 0.0
    pred = predict_class(model, [p for p, _ in dataset])
    return float(np.mean(pred == np.array([c for _, c in dataset])))


def train_segmenter(model: NFPModel, taxonomy, train_set, val_set,
                    cfg: TrainConfig | None = None,
                    queries_per_step: int = 512) -> TrainReport:
    """train_set entries: (planes, class id, points (Q, 3), part labels).

    Part labels are global part ids; each step subsamples
    `queries_per_step` query points per shape.
    """
    cfg = cfg or seg_train_config()
    rng = derive_rng(cfg.seed, "train_seg")
    steps_per_epoch = max(1, math.ceil(len(train_set) / cfg.batch_size))
    sched = OneCycleSchedule(cfg.max_lr, cfg.epochs * steps_per_epoch)
    opt = AdamW(model.parameters(), weight_decay=1e-2)
    crop = model.cfg.crop

    losses, scores = [], []
    best = (-1.0, -1, None)
    step = 0
    for epoch in range(cfg.epochs):
        order = rng.permutation(len(train_set))
        epoch_loss = 0.0
        for lo in range(0, len(order), cfg.batch_size):
            idx = order[lo:lo + cfg.batch_size]
            toks, classes, pts, parts = [], [], [], []
            for i in idx:
                planes, cls, qp, ql = train_set[i]
                sel = rng.choice(len(qp), size=min(queries_per_step, len(qp)),
                                 replace=False)
                toks.append(tokenize(planes, crop, rng))
                classes.append(cls)
                pts.append(qp[sel])
                parts.append(ql[sel])
            logits = segment(model, np.stack(toks), np.stack(pts), classes)
            loss = cross_entropy(logits, np.concatenate(parts))
            opt.zero_grad()
            loss.backward()
            step += 1
            opt.step(sched.lr(step))
            epoch_loss += loss.item() * len(idx)
        losses.append(epoch_loss / len(train_set))
        miou = instance_miou(model, taxonomy, val_set)
        scores.append(miou)
        if miou > best[0]:
            best = (miou, epoch, model.state())
    if best[2] is not None:
        model.load_state(best[2])
    return TrainReport(losses, scores, best[1], best[0])


def predict_parts(model: NFPModel, taxonomy, planes, class_id,
                  points, chunk: int = 2048) -> np.ndarray:
    """Argmax restricted to the parts belonging to the shape's class."""
    allowed = np.asarray(taxonomy.parts_of(class_id))
    toks = batch_tokens([planes], model.cfg.crop)
    out = []
    with no_grad():
        for lo in range(0, len(points), chunk):
            logits = segment(model, toks, points[None, lo:lo + chunk],
                             [class_id]).data[0]
            out.append(allowed[np.argmax(logits[:, allowed], axis=1)])
    return np.concatenate(out)


def _shape_iou(pred, gt, part_ids):
    ious = []
    for part in part_ids:
        p, g = pred == part, gt == part
        union = np.logical_or(p, g).sum()
        if union == 0:
            ious.append(1.0)
        else:
            ious.append(np.logical_and(p, g).sum() / union)
    return float(np.mean(ious))


def instance_miou(model: NFPModel, taxonomy, dataset) -> float:
    """Mean over shapes of the per-shape mean part IoU."""
    vals = []
    for planes, cls, pts, gt in dataset:
        pred = predict_parts(model, taxonomy, planes, cls, pts)
        vals.append(_shape_iou(pred, gt, taxonomy.parts_of(cls)))
    return float(np.mean(vals)) if vals else 0.0


def class_miou(model: NFPModel, taxonomy, dataset) -> dict:
    """Per-class mean of instance IoUs, plus their average."""
    per_class: dict[int, list] = {}
    for planes, cls, pts, gt in dataset:
        pred = predict_parts(model, taxonomy, planes, cls, pts)
        per_class.setdefault(cls, []).append(
            _shape_iou(pred, gt, taxonomy.parts_of(cls)))
    out = {cls: float(np.mean(v)) for cls, v in per_class.items()}
    out["mean"] = float(np.mean(list(out.values()))) if out else 0.0
    return out
