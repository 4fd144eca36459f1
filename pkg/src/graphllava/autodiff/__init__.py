"""Minimal reverse-mode autodiff engine used by the model."""

from .gradcheck import GradCheckReport, grad_check, rel_error
from .optim import AdamW, AdamWState, adamw_step
from .tensor import (
    Tensor,
    add,
    as_tensor,
    backward,
    concat,
    embedding,
    gelu,
    is_grad_enabled,
    layer_norm,
    masked_cross_entropy,
    masked_fill,
    matmul,
    mean,
    mul,
    no_grad,
    reshape,
    scale,
    softmax,
    sum,
    transpose,
)

__all__ = [
    "AdamW",
    "AdamWState",
    "GradCheckReport",
    "Tensor",
    "adamw_step",
    "add",
    "as_tensor",
    "backward",
    "concat",
    "embedding",
    "gelu",
    "grad_check",
    "is_grad_enabled",
    "layer_norm",
    "masked_cross_entropy",
    "masked_fill",
    "matmul",
    "mean",
    "mul",
    "no_grad",
    "rel_error",
    "reshape",
    "scale",
    "softmax",
    "sum",
    "transpose",
]
