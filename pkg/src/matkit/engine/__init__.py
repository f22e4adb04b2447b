"""Numpy-backed reverse-mode autodiff engine: tensors, ops, Adam, RNG, checkpoints."""

from .checkpoint import load_arrays, save_arrays
from .gradcheck import grad_check
from .optim import AdamState, adam_step, zero_grads
from .rng import Rng, Stream
from .tensor import (
    Tensor,
    abs_,
    add,
    avg_pool2,
    clamp,
    concat,
    conv2d_circular,
    conv2d_zero,
    dense,
    div,
    exp,
    group_norm,
    log,
    matmul,
    maximum,
    mean,
    mse,
    mul,
    nearest_upsample2,
    relu,
    reshape,
    sigmoid,
    silu,
    slice_,
    sqrt,
    sub,
    sum_,
    take_rows,
    tensor,
    transpose,
    where,
)

__all__ = [
    "AdamState", "Rng", "Stream", "Tensor",
    "abs_", "adam_step", "add", "avg_pool2", "clamp", "concat",
    "conv2d_circular", "conv2d_zero", "dense", "div", "exp", "grad_check",
    "group_norm", "load_arrays", "log", "matmul", "maximum", "mean", "mse",
    "mul", "nearest_upsample2", "relu", "reshape", "save_arrays", "sigmoid",
    "silu", "slice_", "sqrt", "sub", "sum_", "take_rows", "tensor",
    "transpose", "where", "zero_grads",
]
