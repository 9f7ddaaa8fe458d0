"""Numpy layers, optimizer, and gradient checking for the classifier."""

from .gradcheck import GradientCheckReport, gradient_check, numeric_gradient
from .layers import (
    BatchNorm,
    Dense,
    Embedding,
    LstmLayer,
    LstmLayerParams,
    LstmStack,
    batch_cross_entropy,
    cross_entropy,
    dense_softmax,
    dropout_backward,
    dropout_forward,
    lstm_cell_backward,
    lstm_cell_forward,
    lstm_stack_forward,
    sigmoid,
    softmax,
    softmax_cross_entropy_grad,
)
from .optim import Nadam

__all__ = [
    "BatchNorm",
    "Dense",
    "Embedding",
    "GradientCheckReport",
    "LstmLayer",
    "LstmLayerParams",
    "LstmStack",
    "Nadam",
    "batch_cross_entropy",
    "cross_entropy",
    "dense_softmax",
    "dropout_backward",
    "dropout_forward",
    "gradient_check",
    "lstm_cell_backward",
    "lstm_cell_forward",
    "lstm_stack_forward",
    "numeric_gradient",
    "sigmoid",
    "softmax",
    "softmax_cross_entropy_grad",
]
