from src.autodiff.tensor import Tensor, Tape, backward, set_debug, debug_enabled, as_tensor
from src.autodiff.ops import (
    add,
    sub,
    mul,
    div,
    scale,
    sigmoid,
    sqrt,
    clamp_min,
    elementwise,
    matmul,
    softmax,
    layer_norm,
    conv1d,
    maxpool1d,
    reduce,
    sum_,
    mean,
    std,
    embedding_lookup,
    take,
    reshape,
    transpose,
    concat,
)
from src.autodiff.gradcheck import grad_check
from src.autodiff.module import Module, Parameter

__all__ = [
    "Tensor",
    "Tape",
    "backward",
    "set_debug",
    "debug_enabled",
    "as_tensor",
    "add",
    "sub",
    "mul",
    "div",
    "scale",
    "sigmoid",
    "sqrt",
    "clamp_min",
    "elementwise",
    "matmul",
    "softmax",
    "layer_norm",
    "conv1d",
    "maxpool1d",
    "reduce",
    "sum_",
    "mean",
    "std",
    "embedding_lookup",
    "take",
    "reshape",
    "transpose",
    "concat",
    "grad_check",
    "Module",
    "Parameter",
]
