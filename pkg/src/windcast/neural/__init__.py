from .autograd import (
    Tensor,
    concat,
    dropout,
    gaussian_nll,
    matmul,
    sigmoid,
    softplus,
    softplus_np,
    stack,
    tanh,
)
from .layers import CELLS, Dense, GRUCell, LSTMCell, Module, make_cell, unrolled
from .optim import SGD, Adam, AdamState, adam_step, clip_grad_norm, sgd_step

__all__ = [
    "Tensor", "concat", "dropout", "gaussian_nll", "matmul", "sigmoid", "softplus", "softplus_np",
    "stack", "tanh", "CELLS", "Dense", "GRUCell", "LSTMCell", "Module", "make_cell", "unrolled",
    "SGD", "Adam", "AdamState", "adam_step", "clip_grad_norm", "sgd_step",
]
