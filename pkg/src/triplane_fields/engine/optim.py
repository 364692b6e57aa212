"""Optimizers and the one-cycle learning-rate schedule."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .tensor import Tensor


class AdamW:
    """Adam with decoupled weight decay and bias correction.

    `params` is a list of Tensors or a list of (param_list, lr_scale)
    groups; a per-step learning rate is passed to `step`.
    """

    def __init__(self, params, beta1=0.9, beta2=0.999, eps=1e-8, weight_decay=0.0):
        if params and isinstance(params[0], Tensor):
            params = [(list(params), 1.0)]
        self.groups = [(list(ps), float(scale)) for ps, scale in params]
        self.beta1, self.beta2, self.eps = beta1, beta2, eps
        self.weight_decay = weight_decay
        self.t = 0
        self.m = {id(p): np.zeros_like(p.data) for ps, _ in self.groups for p in ps}
        self.v = {id(p): np.zeros_like(p.data) for ps, _ in self.groups for p in ps}

    def zero_grad(self):
        for ps, _ in self.groups:
            for p in ps:
                p.grad = None

    def step(self, lr: float):
        self.t += 1
        bc1 = 1.0 - self.beta1 ** self.t
        bc2 = 1.0 - self.beta2 ** self.t
        for ps, scale in self.groups:
            glr = lr * scale
            for p in ps:
                g = p.grad
                if g is None:
                    continue
                if not np.all(np.isfinite(g)):
                    raise FloatingPointError(
                        f"non-finite gradient for parameter of shape {p.shape} "
                        f"at step {self.t}")
                m = self.m[id(p)]
                v = self.v[id(p)]
                m *= self.beta1
                m += (1 - self.beta1) * g
                v *= self.beta2
                v += (1 - self.beta2) * g * g
                update = (m / bc1) / (np.sqrt(v / bc2) + self.eps)
                if self.weight_decay:
                    p.data -= glr * self.weight_decay * p.data
                p.data -= glr * update


def adamw_step(optimizer: AdamW, lr: float):
    """Apply one optimizer step at learning rate lr (gradients already set)."""
    optimizer.step(lr)


@dataclass(frozen=True)
class OneCycleSchedule:
    """Cosine warmup to max_lr over `warmup_frac` of training, cosine
    anneal to max_lr * final_factor over the rest."""

    max_lr: float
    total_steps: int
    warmup_frac: float = 0.3
    start_factor: float = 1.0 / 25.0
    final_factor: float = 1.0 / 10_000.0

    def lr(self, step: int) -> float:
        step = min(max(step, 0), self.total_steps)
        warm = self.warmup_frac * self.total_steps
        if step <= warm:
            t = step / warm if warm > 0 else 1.0
            lo = self.max_lr * self.start_factor
            return lo + (self.max_lr - lo) * 0.5 * (1 - math.cos(math.pi * t))
        t = (step - warm) / (self.total_steps - warm)
        lo = self.max_lr * self.final_factor
        return lo + (self.max_lr - lo) * 0.5 * (1 + math.cos(math.pi * t))


def onecycle_lr(schedule: OneCycleSchedule, step: int) -> float:
    return schedule.lr(step)
