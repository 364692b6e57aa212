"""Dense-array reverse-mode automatic differentiation.

A Tensor wraps a numpy array; every primitive records its inputs and a
backward closure. `Tensor.backward()` walks the recorded graph in reverse
creation order (a valid reverse topological order), accumulating gradients
with `+=` on fan-out. Creation order also canonicalizes accumulation, so
results are bitwise reproducible for a fixed build configuration.

Gradient recording is process-global and can be suspended with `no_grad()`
for inference-only evaluation.
"""

from __future__ import annotations

import itertools
from contextlib import contextmanager

import numpy as np


class ShapeError(ValueError):
    pass


_counter = itertools.count()
_grad_enabled = True


@contextmanager
def no_grad():
    global _grad_enabled
    prev = _grad_enabled
    _grad_enabled = False
    try:
        yield
    finally:
        _grad_enabled = prev


class Tensor:
    __slots__ = ("data", "grad", "requires_grad", "_parents", "_backward", "_order")

    def __init__(self, data, requires_grad=False, _parents=(), _backward=None):
        self.data = np.asarray(data)
        if self.data.dtype not in (np.float32, np.float64):
            self.data = self.data.astype(np.float64)
        self.grad = None
        self.requires_grad = bool(requires_grad) and _grad_enabled
        self._parents = _parents if self.requires_grad else ()
        self._backward = _backward if self.requires_grad else None
        self._order = next(_counter)

    # ------------------------------------------------------------------
    @property
    def shape(self):
        return self.data.shape

    @property
    def dtype(self):
        return self.data.dtype

    def item(self):
        return float(self.data)

    def detach(self):
        return Tensor(self.data)

    def zero_grad(self):
        self.grad = None

    def __repr__(self):
        return f"Tensor(shape={self.data.shape}, dtype={self.data.dtype.name}, requires_grad={self.requires_grad})"

    # ------------------------------------------------------------------
    def backward(self):
        if self.data.size != 1:
            raise ValueError(f"backward requires a scalar loss, got shape {self.shape}")
        # collect reachable subgraph
        visited = set()
        nodes = []
        stack = [self]
        while stack:
            t = stack.pop()
            if id(t) in visited:
                continue
            visited.add(id(t))
            nodes.append(t)
            stack.extend(t._parents)
        # reverse creation order is a reverse topological order
        nodes.sort(key=lambda t: t._order, reverse=True)
        self.grad = np.ones_like(self.data)
        for t in nodes:
            if t._backward is not None and t.grad is not None:
                t._backward(t.grad)
            if t._parents:
                t.grad = None   # free intermediate gradients eagerly

    def _accumulate(self, g):
        if self.grad is None:
            self.grad = np.array(g, dtype=self.data.dtype, copy=True)
        else:
            self.grad += g

    # operator sugar -----------------------------------------------------
    def __add__(self, other):
        return add(self, other)

    __radd__ = __add__

    def __sub__(self, other):
        return sub(self, other)

    def __rsub__(self, other):
        return sub(other, self)

    def __mul__(self, other):
        return mul(self, other)

    __rmul__ = __mul__

    def __truediv__(self, other):
        return div(self, other)

    def __rtruediv__(self, other):
        return div(other, self)

    def __neg__(self):
        return mul(self, -1.0)

    def __matmul__(self, other):
        return matmul(self, other)

    def __getitem__(self, key):
        return slice_(self, key)

    def reshape(self, *shape):
        return reshape(self, shape)

    def sum(self, axis=None, keepdims=False):
        return sum_(self, axis, keepdims)

    def mean(self, axis=None, keepdims=False):
        return mean(self, axis, keepdims)


def tensor(data, requires_grad=False, dtype=None):
    arr = np.asarray(data, dtype=dtype)
    if arr.dtype not in (np.float32, np.float64):
        arr = arr.astype(np.float64)
    return Tensor(arr, requires_grad=requires_grad)


def _lift(x, like=None):
    if isinstance(x, Tensor):
        return x
    dtype = like.dtype if like is not None else np.float64
    return Tensor(np.asarray(x, dtype=dtype))


def _unbroadcast(grad, shape):
    """Sum grad down to `shape` after numpy broadcasting."""
    if grad.shape == shape:
        return grad
    extra = grad.ndim - len(shape)
    if extra > 0:
        grad = grad.sum(axis=tuple(range(extra)))
    axes = tuple(i for i, s in enumerate(shape) if s == 1 and grad.shape[i] != 1)
    if axes:
        grad = grad.sum(axis=axes, keepdims=True)
    return grad.reshape(shape)


def _binary(a, b, fwd, da, db, name):
    a, b = _lift(a), _lift(b, like=a)
    try:
        out_data = fwd(a.data, b.data)
    except ValueError as e:
        raise ShapeError(f"{name}: incompatible shapes {a.shape} and {b.shape}") from e
    req = a.requires_grad or b.requires_grad
    out = Tensor(out_data, requires_grad=req, _parents=(a, b))
    if out.requires_grad:
        def backward(g):
            if a.requires_grad:
                a._accumulate(_unbroadcast(da(g, a.data, b.data), a.shape))
            if b.requires_grad:
                b._accumulate(_unbroadcast(db(g, a.data, b.data), b.shape))
        out._backward = backward
    return out


def add(a, b):
    return _binary(a, b, np.add, lambda g, x, y: g, lambda g, x, y: g, "add")


def sub(a, b):
    return _binary(a, b, np.subtract, lambda g, x, y: g, lambda g, x, y: -g, "sub")


def mul(a, b):
    return _binary(a, b, np.multiply,
                   lambda g, x, y: g * y, lambda g, x, y: g * x, "mul")


def div(a, b):
    return _binary(a, b, np.divide,
                   lambda g, x, y: g / y, lambda g, x, y: -g * x / (y * y), "div")


def matmul(a, b):
    a, b = _lift(a), _lift(b, like=a)
    if a.data.ndim < 2 or b.data.ndim < 2:
        raise ShapeError(f"matmul: operands must be >= 2-D, got {a.shape} @ {b.shape}")
    if a.shape[-1] != b.shape[-2]:
        raise ShapeError(f"matmul: inner dims differ, {a.shape} @ {b.shape}")
    out = Tensor(np.matmul(a.data, b.data),
                 requires_grad=a.requires_grad or b.requires_grad,
                 _parents=(a, b))
    if out.requires_grad:
        def backward(g):
            if a.requires_grad:
                ga = np.matmul(g, np.swapaxes(b.data, -1, -2))
                a._accumulate(_unbroadcast(ga, a.shape))
            if b.requires_grad:
                gb = np.matmul(np.swapaxes(a.data, -1, -2), g)
                b._accumulate(_unbroadcast(gb, b.shape))
        out._backward = backward
    return out


def _unary(a, fwd, dfn, name):
    a = _lift(a)
    out = Tensor(fwd(a.data), requires_grad=a.requires_grad, _parents=(a,))
    if out.requires_grad:
        # bind out.data directly: capturing `out` would make a reference
        # cycle and keep whole step graphs alive until a gc pass
        out._backward = lambda g, y=out.data: a._accumulate(dfn(g, a.data, y))
    return out


def sin(a):
    return _unary(a, np.sin, lambda g, x, y: g * np.cos(x), "sin")


def exp(a):
    return _unary(a, np.exp, lambda g, x, y: g * y, "exp")


def log(a):
    return _unary(a, np.log, lambda g, x, y: g / x, "log")


def sigmoid(a):
    def fwd(x):
        out = np.empty_like(x)
        pos = x >= 0
        out[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
        ex = np.exp(x[~pos])
        out[~pos] = ex / (1.0 + ex)
        return out
    return _unary(a, fwd, lambda g, x, y: g * y * (1.0 - y), "sigmoid")


def softplus(a):
    def fwd(x):
        return np.where(x > 30, x, np.log1p(np.exp(np.minimum(x, 30))))
    def dfn(g, x, y):
        s = np.empty_like(x)
        pos = x >= 0
        s[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
        ex = np.exp(x[~pos])
        s[~pos] = ex / (1.0 + ex)
        return g * s
    return _unary(a, fwd, dfn, "softplus")


def power(a, exponent: float):
    """Elementwise power with a constant exponent."""
    e = float(exponent)
    return _unary(a, lambda x: np.power(x, e),
                  lambda g, x, y: g * e * np.power(x, e - 1.0), "power")


def clip(a, lo: float, hi: float):
    """Clamp values; gradient passes through only inside the range."""
    a = _lift(a)
    out = Tensor(np.clip(a.data, lo, hi), requires_grad=a.requires_grad, _parents=(a,))
    if out.requires_grad:
        mask = (a.data >= lo) & (a.data <= hi)
        out._backward = lambda g: a._accumulate(g * mask)
    return out


def concat(tensors, axis=0):
    ts = [_lift(t) for t in tensors]
    out = Tensor(np.concatenate([t.data for t in ts], axis=axis),
                 requires_grad=any(t.requires_grad for t in ts),
                 _parents=tuple(ts))
    if out.requires_grad:
        sizes = [t.shape[axis] for t in ts]
        def backward(g):
            splits = np.split(g, np.cumsum(sizes)[:-1], axis=axis)
            for t, piece in zip(ts, splits):
                if t.requires_grad:
                    t._accumulate(piece)
        out._backward = backward
    return out


def slice_(a, key):
    a = _lift(a)
    out = Tensor(a.data[key], requires_grad=a.requires_grad, _parents=(a,))
    if out.requires_grad:
        def backward(g):
            full = np.zeros_like(a.data)
            np.add.at(full, key, g)
            a._accumulate(full)
        out._backward = backward
    return out


def gather(a, indices, axis=0):
    """Take rows along `axis` by an integer index array."""
    a = _lift(a)
    indices = np.asarray(indices)
    out = Tensor(np.take(a.data, indices, axis=axis),
                 requires_grad=a.requires_grad, _parents=(a,))
    if out.requires_grad:
        def backward(g):
            full = np.zeros_like(a.data)
            if axis == 0:
                np.add.at(full, indices, g)
            else:
                full_m = np.moveaxis(full, axis, 0)
                np.add.at(full_m, indices, np.moveaxis(g, axis, 0))
            a._accumulate(full)
        out._backward = backward
    return out


def reshape(a, shape):
    a = _lift(a)
    out = Tensor(a.data.reshape(shape), requires_grad=a.requires_grad, _parents=(a,))
    if out.requires_grad:
        out._backward = lambda g: a._accumulate(g.reshape(a.shape))
    return out


def transpose(a, axes):
    a = _lift(a)
    out = Tensor(np.transpose(a.data, axes), requires_grad=a.requires_grad, _parents=(a,))
    if out.requires_grad:
        inv = np.argsort(axes)
        out._backward = lambda g: a._accumulate(np.transpose(g, inv))
    return out


def sum_(a, axis=None, keepdims=False):
    a = _lift(a)
    out = Tensor(a.data.sum(axis=axis, keepdims=keepdims),
                 requires_grad=a.requires_grad, _parents=(a,))
    if out.requires_grad:
        def backward(g):
            if axis is not None and not keepdims:
                g = np.expand_dims(g, axis)
            a._accumulate(np.broadcast_to(g, a.shape))
        out._backward = backward
    return out


def mean(a, axis=None, keepdims=False):
    a = _lift(a)
    n = a.data.size if axis is None else np.prod(
        [a.shape[ax] for ax in (axis if isinstance(axis, tuple) else (axis,))])
    return mul(sum_(a, axis, keepdims), 1.0 / float(n))


def max_(a, axis):
    """Max over one axis; gradient flows to the (first) argmax positions."""
    a = _lift(a)
    idx = np.argmax(a.data, axis=axis)
    out_data = np.take_along_axis(a.data, np.expand_dims(idx, axis), axis=axis).squeeze(axis)
    out = Tensor(out_data, requires_grad=a.requires_grad, _parents=(a,))
    if out.requires_grad:
        def backward(g):
            full = np.zeros_like(a.data)
            np.put_along_axis(full, np.expand_dims(idx, axis),
                              np.expand_dims(g, axis), axis=axis)
            a._accumulate(full)
        out._backward = backward
    return out


def softmax(a, axis=-1):
    a = _lift(a)
    shifted = a.data - a.data.max(axis=axis, keepdims=True)
    e = np.exp(shifted)
    s = e / e.sum(axis=axis, keepdims=True)
    out = Tensor(s, requires_grad=a.requires_grad, _parents=(a,))
    if out.requires_grad:
        def backward(g):
            dot = (g * s).sum(axis=axis, keepdims=True)
            a._accumulate(s * (g - dot))
        out._backward = backward
    return out


def layer_norm(a, gain, bias, eps: float = 1e-5):
    """Normalize over the last axis, then scale and shift."""
    a, gain, bias = _lift(a), _lift(gain), _lift(bias)
    mu = a.data.mean(axis=-1, keepdims=True)
    var = a.data.var(axis=-1, keepdims=True)
    inv = 1.0 / np.sqrt(var + eps)
    xhat = (a.data - mu) * inv
    out = Tensor(xhat * gain.data + bias.data,
                 requires_grad=a.requires_grad or gain.requires_grad or bias.requires_grad,
                 _parents=(a, gain, bias))
    if out.requires_grad:
        n = a.shape[-1]
        def backward(g):
            if gain.requires_grad:
                gain._accumulate(_unbroadcast(g * xhat, gain.shape))
            if bias.requires_grad:
                bias._accumulate(_unbroadcast(g, bias.shape))
            if a.requires_grad:
                gx = g * gain.data
                term = gx - gx.mean(axis=-1, keepdims=True) \
                    - xhat * (gx * xhat).mean(axis=-1, keepdims=True)
                a._accumulate(term * inv)
        out._backward = backward
    return out


def smooth_l1(pred, target, beta: float = 1.0):
    """Elementwise smooth-L1 (Huber): quadratic within beta, linear outside."""
    pred = _lift(pred)
    target = _lift(target, like=pred)
    diff = pred.data - target.data
    absd = np.abs(diff)
    vals = np.where(absd < beta, 0.5 * diff * diff / beta, absd - 0.5 * beta)
    out = Tensor(vals, requires_grad=pred.requires_grad or target.requires_grad,
                 _parents=(pred, target))
    if out.requires_grad:
        d = np.where(absd < beta, diff / beta, np.sign(diff))
        def backward(g):
            if pred.requires_grad:
                pred._accumulate(_unbroadcast(g * d, pred.shape))
            if target.requires_grad:
                target._accumulate(_unbroadcast(-g * d, target.shape))
        out._backward = backward
    return out


def cumsum(a, axis):
    a = _lift(a)
    out = Tensor(np.cumsum(a.data, axis=axis), requires_grad=a.requires_grad,
                 _parents=(a,))
    if out.requires_grad:
        def backward(g):
            rev = np.flip(np.cumsum(np.flip(g, axis=axis), axis=axis), axis=axis)
            a._accumulate(rev)
        out._backward = backward
    return out


# ---------------------------------------------------------------------------
# tri-plane bilinear interpolation primitive

_PLANE_AXES = ((0, 1), (0, 2), (1, 2))  # xy, xz, yz projections


def _bilinear_setup(coords, H, W):
    """Per-plane corner indices and weights for align-corners lookup."""
    c = np.clip(coords, -1.0, 1.0)
    setups = []
    for ax_i, ax_j in _PLANE_AXES:
        u = (c[:, ax_i] + 1.0) * 0.5 * (H - 1)
        v = (c[:, ax_j] + 1.0) * 0.5 * (W - 1)
        i0 = np.clip(np.floor(u).astype(np.int64), 0, H - 2)
        j0 = np.clip(np.floor(v).astype(np.int64), 0, W - 2)
        fu = u - i0
        fv = v - j0
        setups.append((i0, j0, fu, fv, ax_i, ax_j))
    return setups


def triplane_interp(planes, coords):
    """Sum of bilinear lookups on three feature planes.

    planes: Tensor (3, C, H, W) stacked (xy, xz, yz); coords: Tensor (N, 3)
    in [-1, 1]^3 (clamped). Returns (N, C). Align-corners convention:
    -1 maps to pixel 0, +1 to pixel H-1 (or W-1). Differentiable w.r.t.
    both plane values and coordinates; the coordinate gradient is zero in
    the clamped region.
    """
    planes = _lift(planes)
    coords = _lift(coords)
    _, C, H, W = planes.shape
    pdata = planes.data
    cdata = coords.data
    setups = _bilinear_setup(cdata, H, W)
    n = len(cdata)
    out_data = np.zeros((n, C), dtype=pdata.dtype)
    corner_vals = []
    for k, (i0, j0, fu, fv, _, _) in enumerate(setups):
        p = pdata[k]                              # (C, H, W)
        v00 = p[:, i0, j0].T                      # (N, C)
        v01 = p[:, i0, j0 + 1].T
        v10 = p[:, i0 + 1, j0].T
        v11 = p[:, i0 + 1, j0 + 1].T
        w00 = ((1 - fu) * (1 - fv))[:, None]
        w01 = ((1 - fu) * fv)[:, None]
        w10 = (fu * (1 - fv))[:, None]
        w11 = (fu * fv)[:, None]
        out_data += v00 * w00 + v01 * w01 + v10 * w10 + v11 * w11
        corner_vals.append((v00, v01, v10, v11))

    out = Tensor(out_data, requires_grad=planes.requires_grad or coords.requires_grad,
                 _parents=(planes, coords))
    if not out.requires_grad:
        return out

    inside = (np.abs(cdata) <= 1.0)

    def backward(g):                               # g: (N, C)
        if planes.requires_grad:
            gp = np.zeros_like(pdata)
            for k, (i0, j0, fu, fv, _, _) in enumerate(setups):
                flat = gp[k].reshape(C, H * W)
                base = i0 * W + j0
                for di, dj, w in ((0, 0, (1 - fu) * (1 - fv)),
                                  (0, 1, (1 - fu) * fv),
                                  (1, 0, fu * (1 - fv)),
                                  (1, 1, fu * fv)):
                    idx = base + di * W + dj
                    contrib = g * w[:, None]       # (N, C)
                    for c_ in range(C):
                        flat[c_] += np.bincount(idx, weights=contrib[:, c_],
                                                minlength=H * W)
            planes._accumulate(gp)
        if coords.requires_grad:
            gc = np.zeros_like(cdata)
            for k, (i0, j0, fu, fv, ax_i, ax_j) in enumerate(setups):
                v00, v01, v10, v11 = corner_vals[k]
                du = ((v10 - v00) * (1 - fv)[:, None] + (v11 - v01) * fv[:, None])
                dv = ((v01 - v00) * (1 - fu)[:, None] + (v11 - v10) * fu[:, None])
                scale_u = 0.5 * (H - 1)
                scale_v = 0.5 * (W - 1)
                gc[:, ax_i] += (g * du).sum(axis=1) * scale_u * inside[:, ax_i]
                gc[:, ax_j] += (g * dv).sum(axis=1) * scale_v * inside[:, ax_j]
            coords._accumulate(gc)

    out._backward = backward
    return out
