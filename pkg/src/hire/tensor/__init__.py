from .core import (
    ShapeError,
    Tape,
    Tensor,
    add,
    as_tensor,
    concat_last,
    linear,
    matmul,
    mul,
    reshape,
    scale,
    layer_norm,
    sigmoid,
    softmax_rows,
    split_last,
    stack,
    sub,
    sum_all,
    take_rows,
    transpose,
)
from .gradcheck import grad_check, grad_check_params, numerical_grad, relative_error

__all__ = [
    "ShapeError",
    "Tape",
    "Tensor",
    "add",
    "as_tensor",
    "concat_last",
    "grad_check",
    "grad_check_params",
    "linear",
    "matmul",
    "mul",
    "numerical_grad",
    "relative_error",
    "reshape",
    "scale",
    "layer_norm",
    "sigmoid",
    "softmax_rows",
    "split_last",
    "stack",
    "sub",
    "sum_all",
    "take_rows",
    "transpose",
]
