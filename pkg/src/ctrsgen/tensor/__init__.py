"""Reverse-mode tensor engine backing the model."""

from .core import (
    ShapeError,
    Tensor,
    add,
    backward,
    concat,
    embedding_lookup,
    gru,
    index,
    log,
    masked_softmax,
    matmul,
    max_over_axis,
    mul,
    no_grad,
    reshape,
    scale,
    sigmoid,
    stack,
    sub,
    tanh,
    transpose,
    tsum,
)
from .gradcheck import grad_check
from .kernels import BACKEND
from .optim import AdamState, adam_step, clip_global_norm, global_norm

__all__ = [
    "AdamState", "BACKEND", "ShapeError", "Tensor", "adam_step", "add", "backward",
    "clip_global_norm", "concat", "embedding_lookup", "global_norm", "grad_check", "gru",
    "index", "log", "masked_softmax", "matmul", "max_over_axis", "mul", "no_grad",
    "reshape", "scale", "sigmoid", "stack", "sub", "tanh", "transpose", "tsum",
]
