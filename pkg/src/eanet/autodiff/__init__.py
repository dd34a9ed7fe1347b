"""Self-contained reverse-mode autodiff: tensors, ops, optimizer, file format."""

from .optim import Adam
from .ops import (
    attention,
    attention_block,
    attention_weights,
    conv1x1,
    cross_attention_block,
    global_average_pool,
    l1_loss,
    linear,
    residual_mlp,
    sample_at_joints,
    soft_argmax_2_5d,
)
from .serialize import load_tensor, save_tensor, tensor_from_bytes, tensor_to_bytes
from .tensor import (
    Tensor,
    absolute,
    add,
    as_tensor,
    bilinear_sample,
    concat,
    conv2d,
    div,
    gelu,
    graph_leaves,
    matmul,
    mul,
    narrow,
    neg,
    reshape,
    set_finite_checks,
    softmax,
    sub,
    take_rows,
    tmean,
    topo_order,
    transpose,
    tsum,
    zero_grads,
    zeros,
)

__all__ = [
    "Adam",
    "Tensor",
    "absolute",
    "add",
    "as_tensor",
    "attention",
    "attention_block",
    "attention_weights",
    "bilinear_sample",
    "concat",
    "conv1x1",
    "conv2d",
    "cross_attention_block",
    "div",
    "gelu",
    "global_average_pool",
    "graph_leaves",
    "l1_loss",
    "linear",
    "load_tensor",
    "matmul",
    "mul",
    "narrow",
    "neg",
    "reshape",
    "residual_mlp",
    "sample_at_joints",
    "save_tensor",
    "set_finite_checks",
    "soft_argmax_2_5d",
    "softmax",
    "sub",
    "take_rows",
    "tensor_from_bytes",
    "tensor_to_bytes",
    "tmean",
    "topo_order",
    "transpose",
    "tsum",
    "zero_grads",
    "zeros",
]
