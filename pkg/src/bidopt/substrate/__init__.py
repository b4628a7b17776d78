"""Minimal differentiable layer used to train the price-volume encoder and the sequence policy."""

from .gradcheck import GradCheckReport, grad_check
from .nn import AttentionConfig, Params, causal_self_attention
from .optim import NonFiniteGradient, sgd_step
from .tensor import (
    Tape,
    Tensor,
    linear,
    mse,
    relu,
    softplus,
    tanh,
    weighted_mse,
)

__all__ = [
    "AttentionConfig",
    "GradCheckReport",
    "NonFiniteGradient",
    "Params",
    "Tape",
    "Tensor",
    "causal_self_attention",
    "grad_check",
    "linear",
    "mse",
    "relu",
    "sgd_step",
    "softplus",
    "tanh",
    "weighted_mse",
]
