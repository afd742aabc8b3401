from .params import (
    AdamConfig,
    ParamStore,
    adam_step,
    clip_grad_norm,
    decode_checkpoint,
    encode_checkpoint,
    seeded_rng,
)
from .tensor import (
    ShapeError,
    Tensor,
    add,
    broadcast_add,
    concat,
    exp,
    l2_norm,
    leaky_relu,
    log,
    make_op,
    matmul,
    max_over_axis,
    max_pool1d,
    mul,
    no_grad,
    reduce_sum,
    reshape,
    scale,
    slice_,
    sub,
    tanh,
    transpose,
)

__all__ = [
    "AdamConfig", "ParamStore", "ShapeError", "Tensor", "adam_step", "add", "broadcast_add",
    "clip_grad_norm", "concat", "decode_checkpoint", "encode_checkpoint", "exp", "l2_norm",
    "leaky_relu", "log", "make_op", "matmul", "max_over_axis", "max_pool1d", "mul", "no_grad",
    "reduce_sum", "reshape", "scale", "seeded_rng", "slice_", "sub", "tanh", "transpose",
]
