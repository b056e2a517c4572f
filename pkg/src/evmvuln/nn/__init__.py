"""Minimal numpy neural kernel: layers with explicit backward, Adam, BCE."""

from .functional import bce_loss, conv_out_len
from .gradcheck import grad_check
from .layers import (
    Activation,
    BatchNorm,
    Conv1D,
    Dense,
    Dropout,
    Flatten,
    MaxPool1D,
    Module,
    Parameter,
    Sequential,
    cast_module,
)
from .optim import Adam, TrainConfig, adam_step
from .rng import stream

__all__ = [
    "Activation", "Adam", "BatchNorm", "Conv1D", "Dense", "Dropout", "Flatten", "MaxPool1D",
    "Module", "Parameter", "Sequential", "TrainConfig", "adam_step", "bce_loss", "cast_module",
    "conv_out_len", "grad_check", "stream",
]
