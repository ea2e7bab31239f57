"""Reverse-mode automatic differentiation used by the simulator."""

from .sampling import draw_uniform, gumbel_softmax_bernoulli
from .tensor import (
    OPS,
    GradientMap,
    Tape,
    Tensor,
    active_tape,
    add,
    apply,
    backward,
    broadcast,
    clamp_min_smooth,
    concat,
    constant,
    div,
    exp,
    expm1,
    grad,
    history_mix,
    leaf,
    lgamma,
    log,
    matmul,
    mul,
    neg,
    pow,
    reshape,
    segment_sum,
    sigmoid,
    softplus,
    stack,
    sub,
    sum,
    take,
    tanh,
    venue_exposure,
)

__all__ = [
    "OPS", "GradientMap", "Tape", "Tensor", "active_tape", "add", "apply", "backward",
    "broadcast", "clamp_min_smooth", "concat", "constant", "div", "draw_uniform", "exp",
    "expm1", "grad", "gumbel_softmax_bernoulli", "history_mix", "leaf", "lgamma", "log",
    "matmul", "mul", "neg", "pow", "reshape", "segment_sum", "sigmoid", "softplus", "stack",
    "sub", "sum", "take", "tanh", "venue_exposure",
]
