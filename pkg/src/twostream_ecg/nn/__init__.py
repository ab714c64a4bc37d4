"""Reverse-mode differentiation, layers, Adam and checkpoints."""
from .ops import (avgpool1d, concat, conv1d, dropout, flatten, fully_connected, lstm_step,
                  relu, sigmoid, softmax, softmax_cross_entropy, tanh)
from .optim import Adam, AdamState, LrSchedule, adam_step, lr_at
from .tensor import Tensor

__all__ = [
    "Tensor", "conv1d", "avgpool1d", "relu", "sigmoid", "tanh", "fully_connected", "flatten",
    "dropout", "concat", "softmax", "softmax_cross_entropy", "lstm_step",
    "Adam", "AdamState", "LrSchedule", "adam_step", "lr_at",
]
