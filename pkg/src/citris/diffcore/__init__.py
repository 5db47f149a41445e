from . import distributions, nn, optim, tensor
from .optim import ParamStore, warmup_cosine_lr
from .tensor import Tensor, constant

__all__ = [
    "ParamStore",
    "Tensor",
    "constant",
    "distributions",
    "nn",
    "optim",
    "tensor",
    "warmup_cosine_lr",
]
