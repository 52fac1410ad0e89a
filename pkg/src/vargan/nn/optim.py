"""ADAM and Nesterov-momentum update rules over named parameter dicts."""

import numpy as np


class OptimError(ValueError):
    pass


class Adam:
    """ADAM with bias correction: theta -= lr * m_hat / (sqrt(v_hat) + eps)."""

    rule = "adam"

    def __init__(self, lr=1e-4, beta1=0.5, beta2=0.999, eps=1e-8):
        self.lr = lr
        self.beta1 = beta1
        self.beta2 = beta2
        self.eps = eps
        self.t = 0
        self.m = {}
        self.v = {}

    def step(self, params, grads):
        self.t += 1
        for name, p in params.items():
            g = grads[name]
            if not np.all(np.isfinite(g)):
                raise OptimError(f"non-finite gradient for parameter {name!r}")
            if name not in self.m:
                self.m[name] = np.zeros_like(p)
                self.v[name] = np.zeros_like(p)
            self.m[name] = self.beta1 * self.m[name] + (1 - self.beta1) * g
            self.v[name] = self.beta2 * self.v[name] + (1 - self.beta2) * g * g
            m_hat = self.m[name] / (1 - self.beta1**self.t)
            v_hat = self.v[name] / (1 - self.beta2**self.t)
            p -= (self.lr * m_hat / (np.sqrt(v_hat) + self.eps)).astype(p.dtype)

    def state(self):
        return {"t": self.t, "m": self.m, "v": self.v}

    def load_state(self, state):
        self.t = int(state["t"])
        self.m = {k: np.array(v) for k, v in state["m"].items()}
        self.v = {k: np.array(v) for k, v in state["v"].items()}


class Nesterov:
    """Nesterov momentum, gradient taken at the current (look-ahead) point:

        v <- mu * v - lr * g
        theta <- theta + mu * v - lr * g
    """

    rule = "nesterov"

    def __init__(self, lr=0.01, momentum=0.9):
        self.lr = lr
        self.momentum = momentum
        self.t = 0
        self.vel = {}

    def step(self, params, grads):
        self.t += 1
        for name, p in params.items():
            g = grads[name]
            if not np.all(np.isfinite(g)):
                raise OptimError(f"non-finite gradient for parameter {name!r}")
            if name not in self.vel:
                self.vel[name] = np.zeros_like(p)
            v = self.momentum * self.vel[name] - self.lr * g
            self.vel[name] = v
            p += (self.momentum * v - self.lr * g).astype(p.dtype)

    def state(self):
        return {"t": self.t, "v": self.vel}

    def load_state(self, state):
        self.t = int(state["t"])
        self.vel = {k: np.array(v) for k, v in state["v"].items()}
