"""Minimal reverse-mode differentiable tensor engine."""

from .layers import (
    Conv2D,
    Dense,
    Flatten,
    Layer,
    ReLU,
    ShapeError,
    Sigmoid,
    layer_from_geometry,
)
from .losses import (
    cross_entropy,
    cross_entropy_grad,
    loss_grad,
    loss_value,
    one_hot,
    squared_code_loss,
    squared_code_loss_grad,
)
from .network import Network, apply_head, backward, forward, softmax
from .optim import SGD, sgd_update
from .gradcheck import GradCheckResult, finite_diff_gradcheck
from .checkpoint import CheckpointError, load_network, save_network

__all__ = [
    "Conv2D", "Dense", "Flatten", "Layer", "ReLU", "ShapeError", "Sigmoid",
    "layer_from_geometry", "cross_entropy", "cross_entropy_grad", "loss_grad",
    "loss_value", "one_hot", "squared_code_loss", "squared_code_loss_grad",
    "Network", "apply_head", "backward", "forward", "softmax",
    "SGD", "sgd_update", "GradCheckResult", "finite_diff_gradcheck",
    "CheckpointError", "load_network", "save_network",
]
