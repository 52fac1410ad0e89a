"""Layer vocabulary: dense, 3x3 conv, 2x2 pooling/upsampling, activations, reshapes.

Each layer owns its parameters and accumulates parameter gradients during
``backward``. Forward caches whatever the backward pass needs; calling
``backward`` without a preceding ``forward`` is an error.
"""

import numpy as np


class LayerError(ValueError):
    pass


def _check_finite(x, where):
    if not np.all(np.isfinite(x)):
        bad = np.argwhere(~np.isfinite(np.asarray(x)))
        raise LayerError(f"non-finite value entering {where} at index {tuple(bad[0])}")


class Layer:
    """Base class; subclasses set self.params / self.grads dicts."""

    kind = "base"

    def __init__(self):
        self.params = {}
        self.grads = {}
        self._cache = None

    def forward(self, x):
        raise NotImplementedError

    def backward(self, grad_out):
        raise NotImplementedError

    def zero_grads(self):
        for name, p in self.params.items():
            self.grads[name] = np.zeros_like(p)

    def out_shape(self, in_shape):
        """Per-element output shape given per-element input shape (no batch dim)."""
        raise NotImplementedError

    def _need_cache(self):
        if self._cache is None:
            raise LayerError(f"backward called before forward on {self.kind} layer")
        return self._cache


_ACTIVATIONS = {
    "elu": (
        lambda v: np.where(v > 0, v, np.expm1(np.minimum(v, 0.0))),
        lambda v, y: np.where(v > 0, 1.0, y + 1.0),
    ),
    "relu": (
        lambda v: np.maximum(v, 0.0),
        lambda v, y: (v > 0).astype(v.dtype),
    ),
    "tanh": (
        np.tanh,
        lambda v, y: 1.0 - y * y,
    ),
    "sigmoid": (
        lambda v: 1.0 / (1.0 + np.exp(-np.clip(v, -60.0, 60.0))),
        lambda v, y: y * (1.0 - y),
    ),
}


class Activation(Layer):
    kind = "activation"

    def __init__(self, fn):
        super().__init__()
        if fn not in _ACTIVATIONS:
            raise LayerError(f"unknown activation {fn!r}")
        self.fn = fn

    def forward(self, x):
        _check_finite(x, f"activation({self.fn})")
        f, _ = _ACTIVATIONS[self.fn]
        y = f(x)
        self._cache = (x, y)
        return y

    def backward(self, grad_out):
        x, y = self._need_cache()
        _, df = _ACTIVATIONS[self.fn]
        return grad_out * df(x, y)

    def out_shape(self, in_shape):
        return tuple(in_shape)


class Dense(Layer):
    """y = x @ W.T + b with W of shape (out_dim, in_dim)."""

    kind = "dense"

    def __init__(self, in_dim, out_dim, rng, dtype=np.float64):
        super().__init__()
        self.in_dim = int(in_dim)
        self.out_dim = int(out_dim)
        bound = 1.0 / np.sqrt(self.in_dim)
        self.params = {
            "W": rng.uniform(-bound, bound, (self.out_dim, self.in_dim)).astype(dtype),
            "b": np.zeros(self.out_dim, dtype=dtype),
        }
        self.zero_grads()

    def forward(self, x):
        if x.ndim != 2 or x.shape[1] != self.in_dim:
            raise LayerError(
                f"dense expects (batch, {self.in_dim}), got {x.shape}"
            )
        self._cache = x
        return x @ self.params["W"].T + self.params["b"]

    def backward(self, grad_out):
        x = self._need_cache()
        self.grads["W"] += grad_out.T @ x
        self.grads["b"] += grad_out.sum(axis=0)
        return grad_out @ self.params["W"]

    def out_shape(self, in_shape):
        if int(np.prod(in_shape)) != self.in_dim:
            raise LayerError(f"dense in_dim {self.in_dim} vs input shape {in_shape}")
        return (self.out_dim,)


def _im2col(xp, kh, kw, stride, oh, ow):
    # xp: padded input (B, C, Hp, Wp) -> (B, C*kh*kw, oh*ow)
    b, c, _, _ = xp.shape
    cols = np.empty((b, c, kh * kw, oh * ow), dtype=xp.dtype)
    for ki in range(kh):
        for kj in range(kw):
            patch = xp[:, :, ki : ki + stride * oh : stride, kj : kj + stride * ow : stride]
            cols[:, :, ki * kw + kj, :] = patch.reshape(b, c, oh * ow)
    return cols.reshape(b, c * kh * kw, oh * ow)


def _col2im(cols, b, c, hp, wp, kh, kw, stride, oh, ow, dtype):
    xp = np.zeros((b, c, hp, wp), dtype=dtype)
    cols = cols.reshape(b, c, kh * kw, oh * ow)
    for ki in range(kh):
        for kj in range(kw):
            xp[:, :, ki : ki + stride * oh : stride, kj : kj + stride * ow : stride] += cols[
                :, :, ki * kw + kj, :
            ].reshape(b, c, oh, ow)
    return xp


class Conv2D(Layer):
    """3x3 cross-correlation, zero padding 1, stride 1 (same size) or 2 (halved)."""

    kind = "conv2d"
    KSIZE = 3
    PAD = 1

    def __init__(self, in_ch, out_ch, rng, stride=1, dtype=np.float64):
        super().__init__()
        if stride not in (1, 2):
            raise LayerError(f"stride must be 1 or 2, got {stride}")
        self.in_ch = int(in_ch)
        self.out_ch = int(out_ch)
        self.stride = stride
        fan_in = self.in_ch * self.KSIZE * self.KSIZE
        bound = 1.0 / np.sqrt(fan_in)
        self.params = {
            "W": rng.uniform(-bound, bound, (self.out_ch, self.in_ch, self.KSIZE, self.KSIZE)).astype(dtype),
            "b": np.zeros(self.out_ch, dtype=dtype),
        }
        self.zero_grads()

    def _osize(self, h):
        if self.stride == 1:
            return h
        return (h + 2 * self.PAD - self.KSIZE) // 2 + 1

    def forward(self, x):
        if x.ndim != 4 or x.shape[1] != self.in_ch:
            raise LayerError(f"conv2d expects (batch, {self.in_ch}, H, W), got {x.shape}")
        b, _, h, w = x.shape
        if h + 2 * self.PAD < self.KSIZE or w + 2 * self.PAD < self.KSIZE:
            raise LayerError(f"spatial size {h}x{w} too small for 3x3 kernel")
        oh, ow = self._osize(h), self._osize(w)
        xp = np.pad(x, ((0, 0), (0, 0), (self.PAD, self.PAD), (self.PAD, self.PAD)))
        cols = _im2col(xp, self.KSIZE, self.KSIZE, self.stride, oh, ow)
        wmat = self.params["W"].reshape(self.out_ch, -1)
        y = np.einsum("ok,bkp->bop", wmat, cols, optimize=True)
        y += self.params["b"][None, :, None]
        self._cache = (x.shape, xp.shape, cols, oh, ow)
        return y.reshape(b, self.out_ch, oh, ow)

    def backward(self, grad_out):
        x_shape, xp_shape, cols, oh, ow = self._need_cache()
        b, c, h, w = x_shape
        g = grad_out.reshape(b, self.out_ch, oh * ow)
        wmat = self.params["W"].reshape(self.out_ch, -1)
        self.grads["W"] += np.einsum("bop,bkp->ok", g, cols, optimize=True).reshape(
            self.params["W"].shape
        )
        self.grads["b"] += g.sum(axis=(0, 2))
        dcols = np.einsum("ok,bop->bkp", wmat, g, optimize=True)
        dxp = _col2im(
            dcols, b, c, xp_shape[2], xp_shape[3], self.KSIZE, self.KSIZE,
            self.stride, oh, ow, grad_out.dtype,
        )
        return dxp[:, :, self.PAD : self.PAD + h, self.PAD : self.PAD + w]

    def out_shape(self, in_shape):
        c, h, w = in_shape
        if c != self.in_ch:
            raise LayerError(f"conv2d channel mismatch: {c} vs {self.in_ch}")
        return (self.out_ch, self._osize(h), self._osize(w))


class MaxPool2x2(Layer):
    kind = "maxpool2x2"

    def forward(self, x):
        b, c, h, w = x.shape
        if h % 2 or w % 2:
            raise LayerError(f"maxpool2x2 needs even spatial dims, got {h}x{w}")
        xr = x.reshape(b, c, h // 2, 2, w // 2, 2)
        y = xr.max(axis=(3, 5))
        mask = xr == y[:, :, :, None, :, None]
        # ties: route gradient to the first max in the window
        win = mask.transpose(0, 1, 2, 4, 3, 5).reshape(b, c, h // 2, w // 2, 4)
        win = win & (np.cumsum(win, axis=-1) == 1)
        mask = win.reshape(b, c, h // 2, w // 2, 2, 2).transpose(0, 1, 2, 4, 3, 5)
        self._cache = (mask, x.shape)
        return y

    def backward(self, grad_out):
        mask, x_shape = self._need_cache()
        b, c, h, w = x_shape
        g = grad_out[:, :, :, None, :, None] * mask
        return g.reshape(x_shape)

    def out_shape(self, in_shape):
        c, h, w = in_shape
        if h % 2 or w % 2:
            raise LayerError(f"maxpool2x2 needs even dims, got {in_shape}")
        return (c, h // 2, w // 2)


class Upsample2x2(Layer):
    """Nearest-neighbor 2x upsampling (each pixel becomes a 2x2 block)."""

    kind = "upsample2x2"

    def forward(self, x):
        self._cache = x.shape
        return x.repeat(2, axis=2).repeat(2, axis=3)

    def backward(self, grad_out):
        x_shape = self._need_cache()
        b, c, h, w = x_shape
        return grad_out.reshape(b, c, h, 2, w, 2).sum(axis=(3, 5))

    def out_shape(self, in_shape):
        c, h, w = in_shape
        return (c, 2 * h, 2 * w)


class Flatten(Layer):
    kind = "flatten"

    def forward(self, x):
        self._cache = x.shape
        return x.reshape(x.shape[0], -1)

    def backward(self, grad_out):
        return grad_out.reshape(self._need_cache())

    def out_shape(self, in_shape):
        return (int(np.prod(in_shape)),)


class Reshape(Layer):
    kind = "reshape"

    def __init__(self, target_shape):
        super().__init__()
        self.target_shape = tuple(int(d) for d in target_shape)

    def forward(self, x):
        self._cache = x.shape
        return x.reshape((x.shape[0],) + self.target_shape)

    def backward(self, grad_out):
        return grad_out.reshape(self._need_cache())

    def out_shape(self, in_shape):
        if int(np.prod(in_shape)) != int(np.prod(self.target_shape)):
            raise LayerError(f"cannot reshape {in_shape} to {self.target_shape}")
        return self.target_shape
