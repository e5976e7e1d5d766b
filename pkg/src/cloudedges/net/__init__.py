"""Framework-free neural engine: layers, three point-classifier
architectures, training, and weight serialization."""

from .model import (Network, NetworkSpec, build_network, load_weights,
                    param_count, save_weights)
from .train import (TrainConfig, TrainHistory, loss_and_gradient, predict,
                    sgd_momentum_step, train)

__all__ = [
    "Network",
    "NetworkSpec",
    "TrainConfig",
    "TrainHistory",
    "build_network",
    "load_weights",
    "loss_and_gradient",
    "param_count",
    "predict",
    "save_weights",
    "sgd_momentum_step",
    "train",
]
