"""Central-difference gradient verification."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .tensor import Tensor


@dataclass
class GradCheckReport:
    max_rel_err: float
    passed: bool
    worst_param: int
    worst_index: tuple


def grad_check(fn, params, h: float = 1e-5, tol: float = 1e-5,
               max_coords_per_param: int | None = None, rng=None) -> GradCheckReport:
    """Compare reverse-mode gradients of fn() against central differences.

    fn: zero-argument callable returning a scalar Tensor, recomputed per
    evaluation; params: list of requires-grad Tensors fn closes over.
    Relative error uses max(1, |analytic|, |numeric|) as denominator.
    Set max_coords_per_param to subsample coordinates for large tensors.
    """
    for p in params:
        p.grad = None
    loss = fn()
    loss.backward()
    analytic = [np.zeros_like(p.data) if p.grad is None else p.grad.copy()
                for p in params]

    worst = 0.0
    worst_param, worst_index = -1, ()
    for pi, p in enumerate(params):
        flat = p.data.reshape(-1)
        n = flat.size
        if max_coords_per_param is not None and n > max_coords_per_param:
            rng = rng or np.random.default_rng(0)
            coords = rng.choice(n, size=max_coords_per_param, replace=False)
        else:
            coords = range(n)
        for ci in coords:
            orig = flat[ci]
            flat[ci] = orig + h
            f_plus = fn().item()
            flat[ci] = orig - h
            f_minus = fn().item()
            flat[ci] = orig
            numeric = (f_plus - f_minus) / (2 * h)
            a = analytic[pi].reshape(-1)[ci]
            rel = abs(a - numeric) / max(1.0, abs(a), abs(numeric))
            if rel > worst:
                worst = rel
                worst_param = pi
                worst_index = np.unravel_index(ci, p.shape)
    return GradCheckReport(worst, worst <= tol, worst_param, worst_index)
