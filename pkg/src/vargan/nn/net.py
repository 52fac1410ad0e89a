"""Sequential network container with named parameters and backprop."""

import numpy as np

from .layers import Layer, LayerError


class Net:
    """Ordered stack of layers with a stable parameter naming scheme.

    Parameter names are "<index>_<kind>.<param>", e.g. "03_conv2d.W", so
    checkpoints stay valid as long as the architecture is unchanged.
    """

    def __init__(self, layers, input_shape, name=""):
        self.layers = list(layers)
        self.name = name
        self.input_shape = tuple(int(d) for d in input_shape)
        shape = self.input_shape
        for layer in self.layers:
            shape = layer.out_shape(shape)
        self.output_shape = shape

    def forward(self, x):
        if tuple(x.shape[1:]) != self.input_shape:
            raise LayerError(
                f"net {self.name!r} expects input {self.input_shape}, got {x.shape[1:]}"
            )
        for layer in self.layers:
            x = layer.forward(x)
        return x

    def backward(self, grad_out):
        """Propagate an upstream gradient; accumulates parameter gradients
        in each layer and returns the gradient w.r.t. the net input."""
        g = grad_out
        for layer in reversed(self.layers):
            g = layer.backward(g)
        return g

    def named_params(self):
        out = {}
        for i, layer in enumerate(self.layers):
            for pname, p in layer.params.items():
                out[f"{i:02d}_{layer.kind}.{pname}"] = p
        return out

    def named_grads(self):
        out = {}
        for i, layer in enumerate(self.layers):
            for pname, g in layer.grads.items():
                out[f"{i:02d}_{layer.kind}.{pname}"] = g
        return out

    def zero_grads(self):
        for layer in self.layers:
            layer.zero_grads()

    def set_params(self, named):
        mine = self.named_params()
        if set(named) != set(mine):
            raise LayerError(
                f"parameter name mismatch for net {self.name!r}: "
                f"{sorted(set(named) ^ set(mine))}"
            )
        for key, value in named.items():
            if value.shape != mine[key].shape:
                raise LayerError(f"shape mismatch for {key}: {value.shape} vs {mine[key].shape}")
            mine[key][...] = value

    def param_count(self):
        return sum(p.size for p in self.named_params().values())

    def forward_partial(self, x, upto):
        """Forward through layers [0, upto); used to read intermediate features."""
        for layer in self.layers[:upto]:
            x = layer.forward(x)
        return x


def penultimate_features(net, x):
    """Activations feeding the final dense layer (after its preceding
    activation, before the output head)."""
    dense_idx = [i for i, l in enumerate(net.layers) if l.kind == "dense"]
    if not dense_idx:
        raise LayerError("net has no dense layer")
    return net.forward_partial(x, dense_idx[-1])
