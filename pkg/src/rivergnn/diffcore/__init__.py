"""Minimal dense reverse-mode differentiation engine."""

from .checkpoint import load_checkpoint, save_checkpoint
from .gradcheck import grad_check
from .optim import Adam, AdamState, adam_step, kaiming_init
from .tensor import (
    Tape,
    Tensor,
    add,
    as_tensor,
    concat,
    diag,
    hadamard,
    leaky_relu,
    matmul,
    mean,
    power,
    relu,
    reshape,
    scale,
    scatter,
    softmax_over_mask,
    square,
    sub,
    sum,
    transpose,
)

__all__ = [
    "Adam", "AdamState", "Tape", "Tensor", "adam_step", "add", "as_tensor", "concat", "diag", "grad_check",
    "hadamard", "kaiming_init", "leaky_relu", "load_checkpoint", "matmul", "mean", "power", "relu",
    "reshape", "save_checkpoint", "scale", "scatter", "softmax_over_mask", "square", "sub", "sum",
    "transpose",
]
