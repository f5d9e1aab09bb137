from gazefuse.tensor.core import (
    Tensor,
    activation,
    add,
    as_tensor,
    backward,
    clip,
    concat,
    dropout,
    exp,
    gelu,
    graph_nodes,
    layer_norm,
    log,
    matmul,
    mean,
    mul,
    no_grad,
    relu,
    reshape,
    sigmoid,
    silu,
    softmax,
    stack,
    sub,
    sum_,
    swapaxes,
    take,
    tanh,
    transpose,
)
from gazefuse.tensor import checkpoint
from gazefuse.tensor.gradcheck import grad_check
from gazefuse.tensor.nn import LayerNorm, Linear, Module, normal_init, parameter, zeros_init
from gazefuse.tensor.optim import Optimizer, OptimizerState, make_optimizer, optimizer_step

__all__ = [
    "Tensor", "activation", "add", "as_tensor", "backward", "clip", "concat", "dropout", "exp",
    "gelu", "graph_nodes", "layer_norm", "log", "matmul", "mean", "mul", "no_grad", "relu",
    "reshape", "sigmoid", "silu", "softmax", "stack", "sub", "sum_", "swapaxes", "take", "tanh",
    "transpose", "grad_check", "LayerNorm", "Linear", "Module", "normal_init", "parameter",
    "zeros_init", "Optimizer", "OptimizerState", "make_optimizer", "optimizer_step",
]
