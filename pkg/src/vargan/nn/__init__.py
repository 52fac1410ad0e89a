from .layers import (
    Activation,
    Conv2D,
    Dense,
    Flatten,
    Layer,
    LayerError,
    MaxPool2x2,
    Reshape,
    Upsample2x2,
)
from .net import Net, penultimate_features
from .optim import Adam, Nesterov, OptimError
from .gradcheck import GradCheckReport, gradient_check, input_gradient_check

__all__ = [
    "Activation", "Conv2D", "Dense", "Flatten", "Layer", "LayerError",
    "MaxPool2x2", "Reshape", "Upsample2x2", "Net", "penultimate_features",
    "Adam", "Nesterov", "OptimError",
    "GradCheckReport", "gradient_check", "input_gradient_check",
]
