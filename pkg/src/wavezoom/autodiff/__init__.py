from .tensor import Tensor, grad, no_grad
from .nn import (
    Layer,
    NetSpec,
    apply,
    backward,
    forward,
    gradient_penalty,
    init_params,
    input_grad_norm_penalty,
)
from .optim import AdamState, adam_step

__all__ = [
    "Tensor",
    "grad",
    "no_grad",
    "Layer",
    "NetSpec",
    "apply",
    "backward",
    "forward",
    "gradient_penalty",
    "init_params",
    "input_grad_norm_penalty",
    "AdamState",
    "adam_step",
]
