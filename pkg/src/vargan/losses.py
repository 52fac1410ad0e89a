"""Loss functionals: the auxiliary regression loss, the equilibrium-balanced
autoencoder GAN objective, and the bidirectional-baseline objective.

Maximized objectives are implemented by minimizing their negation; every
function returning a gradient returns the gradient of the value it reports.
"""

from dataclasses import dataclass

import numpy as np


class LossError(ValueError):
    pass


@dataclass
class VarganHyper:
    gamma: float = 0.5        # equilibrium target
    vartheta: float = 0.97    # adversarial weight in the generator loss
    zeta: float = 0.03        # regression weight in the generator loss
    lambda_k: float = 0.001   # learning rate of the equilibrium variable
    eps_log: float = 1e-6     # clamp floor for log arguments

    def __post_init__(self):
        if not 0 < self.gamma < 1:
            raise LossError("gamma must be in (0,1)")
        if self.lambda_k <= 0 or self.eps_log <= 0:
            raise LossError("lambda_k and eps_log must be positive")


@dataclass
class CbiganHyper:
    theta: float = 0.8        # encoder regression weight
    eps_log: float = 1e-6

    def __post_init__(self):
        if self.theta < 0:
            raise LossError("theta must be non-negative")


def regression_loss(y, r, eps_log=1e-6):
    """Mean of -log(1 - (y - r)) with the log argument clamped at eps_log.

    Returns (loss, dloss/dr). The gradient is zero on clamped components.
    """
    y = np.asarray(y)
    r = np.asarray(r)
    if y.shape != r.shape:
        raise LossError(f"target/prediction shape mismatch: {y.shape} vs {r.shape}")
    arg = 1.0 - (y - r)
    clamped = arg < eps_log
    arg = np.maximum(arg, eps_log)
    loss = float(np.mean(-np.log(arg)))
    grad = (-1.0 / arg) / y.size
    grad[clamped] = 0.0
    return loss, grad


def began_recon_loss(v, dv):
    """Pixel-mean squared reconstruction error. Returns (loss, dloss/d(dv))."""
    v = np.asarray(v)
    dv = np.asarray(dv)
    if v.shape != dv.shape:
        raise LossError(f"shape mismatch: {v.shape} vs {dv.shape}")
    diff = dv - v
    loss = float(np.mean(diff * diff))
    return loss, 2.0 * diff / v.size


def began_losses(l_x, l_gz, l_r, k_t, hyper):
    """Discriminator/generator scalars:
    L_d = L(x) - k_t * L(G(z|y));  L_g = vartheta * L(G(z|y)) + zeta * L_R."""
    if l_x < 0 or l_gz < 0:
        raise LossError("reconstruction losses must be non-negative")
    if not 0 <= k_t <= 1:
        raise LossError("k_t must lie in [0,1]")
    l_d = l_x - k_t * l_gz
    l_g = hyper.vartheta * l_gz + hyper.zeta * l_r
    return l_d, l_g


def k_update(k_t, l_x, l_gz, hyper):
    """k_{t+1} = clamp(k_t + lambda_k * (gamma * L(x) - L(G(z|y))), 0, 1)."""
    if not 0 <= k_t <= 1:
        raise LossError("k_t must lie in [0,1]")
    return float(np.clip(k_t + hyper.lambda_k * (hyper.gamma * l_x - l_gz), 0.0, 1.0))


def _clamp_prob(p, eps):
    p = np.asarray(p, dtype=float)
    if np.any(p < 0) or np.any(p > 1):
        raise LossError("probability outside [0,1]")
    return np.clip(p, eps, 1.0 - eps)


def cbigan_losses(p_r, p_i, p_s, s_minus, y, hyper):
    """Baseline objective values:

        L_D = log p_r + log(1-p_I) + log(1-p_s)     (discriminator maximizes)
        L_G = log p_I                                (generator maximizes)
        L_E = log p_s + theta * mean((s_minus-y)^2)  (log maximized, penalty minimized)

    Scalar/batch p-values are averaged. Returns (L_D, L_G, L_E).
    """
    eps = hyper.eps_log
    p_r = _clamp_prob(p_r, eps)
    p_i = _clamp_prob(p_i, eps)
    p_s = _clamp_prob(p_s, eps)
    s_minus = np.asarray(s_minus)
    y = np.asarray(y)
    if s_minus.shape != y.shape:
        raise LossError("encoder output / target shape mismatch")
    l_d = float(np.mean(np.log(p_r)) + np.mean(np.log1p(-p_i)) + np.mean(np.log1p(-p_s)))
    l_g = float(np.mean(np.log(p_i)))
    penalty = float(np.mean((s_minus - y) ** 2))
    l_e = float(np.mean(np.log(p_s)) + hyper.theta * penalty)
    return l_d, l_g, l_e
