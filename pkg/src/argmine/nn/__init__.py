"""Minimal dense NN toolkit with hand-derived gradients (numpy, float64)."""

from .params import Parameter, state_dict, load_state_dict
from .layers import (
    EmbeddingTable,
    Linear,
    BiLstm,
    LstmDirection,
    CnnMaxPool,
    Dropout,
    SoftmaxCrossEntropy,
    softmax,
    cross_entropy,
    relu,
)
from .optim import Adam, NonFiniteGradError, clip_grad_norm
from .checkpoint import CheckpointError, load_checkpoint, save_checkpoint

__all__ = [
    "Parameter", "state_dict", "load_state_dict",
    "EmbeddingTable", "Linear", "BiLstm", "LstmDirection", "CnnMaxPool",
    "Dropout", "SoftmaxCrossEntropy", "softmax", "cross_entropy", "relu",
    "Adam", "NonFiniteGradError", "clip_grad_norm",
    "CheckpointError", "load_checkpoint", "save_checkpoint",
]
