from .tensor import (
    Tensor, tensor, no_grad, add, sub, mul, div, matmul, sin, exp, log,
    sigmoid, softplus, power, clip, concat, reshape, transpose, gather,
    sum_ as tsum, mean, max_ as tmax, softmax, layer_norm, smooth_l1,
    cumsum, triplane_interp, ShapeError,
)
from .optim import AdamW, adamw_step, OneCycleSchedule, onecycle_lr
from .gradcheck import grad_check
from .checkpoint import save_checkpoint, load_checkpoint

__all__ = [
    "Tensor", "tensor", "no_grad", "add", "sub", "mul", "div", "matmul",
    "sin", "exp", "log", "sigmoid", "softplus", "power", "clip", "concat",
    "reshape", "transpose", "gather", "tsum", "mean", "tmax", "softmax",
    "layer_norm", "smooth_l1", "cumsum", "triplane_interp", "ShapeError",
    "AdamW", "adamw_step", "OneCycleSchedule", "onecycle_lr", "grad_check",
    "save_checkpoint", "load_checkpoint",
]
