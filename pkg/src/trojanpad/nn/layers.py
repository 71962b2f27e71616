"""Network layers with exact analytic forward/backward passes.

Data layout is channel-last (N, H, W, C) in float64 throughout. Each layer
caches what its backward pass needs; training is a single sequential loop,
so per-layer caches are safe.
"""

from __future__ import annotations

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view


class NonFiniteActivationError(FloatingPointError):
    def __init__(self, layer_name: str):
        super().__init__(f"non-finite activations after layer {layer_name!r}")
        self.layer_name = layer_name


class Layer:
    name = "layer"

    def params(self) -> dict[str, np.ndarray]:
        return {}

    def grads(self) -> dict[str, np.ndarray]:
        return {}

    def forward(self, x: np.ndarray) -> np.ndarray:
        raise NotImplementedError

    def backward(self, dout: np.ndarray, need_input_grad: bool = True):
        raise NotImplementedError


class Conv2d(Layer):
    """k x k convolution, stride 1, same padding, via im2col."""

    def __init__(self, in_ch: int, out_ch: int, ksize: int = 3, pad: int = 1):
        self.in_ch = in_ch
        self.out_ch = out_ch
        self.ksize = ksize
        self.pad = pad
        self.weight = np.zeros((in_ch, ksize, ksize, out_ch))
        self.bias = np.zeros(out_ch)
        self.dweight = np.zeros_like(self.weight)
        self.dbias = np.zeros_like(self.bias)
        self.name = f"conv{in_ch}x{out_ch}"
        self._cols = None
        self._in_shape = None

    def params(self):
        return {"weight": self.weight, "bias": self.bias}

    def grads(self):
        return {"weight": self.dweight, "bias": self.dbias}

    def init_params(self, rng: np.random.Generator) -> None:
        fan_in = self.in_ch * self.ksize * self.ksize
        limit = np.sqrt(6.0 / fan_in)
        self.weight = rng.uniform(-limit, limit, size=self.weight.shape)
        self.bias = np.zeros(self.out_ch)

    def forward(self, x):
        k, p = self.ksize, self.pad
        xp = np.pad(x, ((0, 0), (p, p), (p, p), (0, 0)))
        win = sliding_window_view(xp, (k, k), axis=(1, 2))
        n, ho, wo = win.shape[0], win.shape[1], win.shape[2]
        cols = win.reshape(n, ho, wo, self.in_ch * k * k)
        self._cols = cols
        self._in_shape = x.shape
        wm = self.weight.reshape(self.in_ch * k * k, self.out_ch)
        return cols @ wm + self.bias

    def backward(self, dout, need_input_grad=True):
        k, p = self.ksize, self.pad
        n, ho, wo, _ = dout.shape
        cols_flat = self._cols.reshape(-1, self.in_ch * k * k)
        dout_flat = dout.reshape(-1, self.out_ch)
        self.dweight = (cols_flat.T @ dout_flat).reshape(self.weight.shape)
        self.dbias = dout_flat.sum(axis=0)
        if not need_input_grad:
            return None
        wm = self.weight.reshape(self.in_ch * k * k, self.out_ch)
        dcols = (dout_flat @ wm.T).reshape(n, ho, wo, self.in_ch, k, k)
        h, w = self._in_shape[1], self._in_shape[2]
        dxp = np.zeros((n, h + 2 * p, w + 2 * p, self.in_ch))
        for i in range(k):
            for j in range(k):
                dxp[:, i : i + ho, j : j + wo, :] += dcols[:, :, :, :, i, j]
        return dxp[:, p : p + h, p : p + w, :]


class ReLU(Layer):
    name = "relu"

    def forward(self, x):
        self._mask = x > 0
        return x * self._mask

    def backward(self, dout, need_input_grad=True):
        return dout * self._mask


class MaxPool2x2(Layer):
    name = "maxpool2x2"

    def forward(self, x):
        n, h, w, c = x.shape
        xr = x.reshape(n, h // 2, 2, w // 2, 2, c)
        flat = xr.transpose(0, 1, 3, 5, 2, 4).reshape(n, h // 2, w // 2, c, 4)
        self._idx = flat.argmax(axis=-1)
        self._in_shape = x.shape
        return np.take_along_axis(flat, self._idx[..., None], axis=-1)[..., 0]

    def backward(self, dout, need_input_grad=True):
        n, h, w, c = self._in_shape
        dflat = np.zeros((n, h // 2, w // 2, c, 4))
        np.put_along_axis(dflat, self._idx[..., None], dout[..., None], axis=-1)
        dxr = dflat.reshape(n, h // 2, w // 2, c, 2, 2).transpose(0, 1, 4, 2, 5, 3)
        return dxr.reshape(n, h, w, c)


class GlobalAvgPool(Layer):
    name = "gap"

    def forward(self, x):
        self._in_shape = x.shape
        return x.mean(axis=(1, 2))

    def backward(self, dout, need_input_grad=True):
        n, h, w, c = self._in_shape
        return np.broadcast_to(dout[:, None, None, :] / (h * w), (n, h, w, c)).copy()


class Dense(Layer):
    def __init__(self, in_dim: int, out_dim: int):
        self.in_dim = in_dim
        self.out_dim = out_dim
        self.weight = np.zeros((in_dim, out_dim))
        self.bias = np.zeros(out_dim)
        self.dweight = np.zeros_like(self.weight)
        self.dbias = np.zeros_like(self.bias)
        self.name = f"dense{in_dim}x{out_dim}"

    def params(self):
        return {"weight": self.weight, "bias": self.bias}

    def grads(self):
        return {"weight": self.dweight, "bias": self.dbias}

    def init_params(self, rng: np.random.Generator) -> None:
        limit = np.sqrt(6.0 / self.in_dim)
        self.weight = rng.uniform(-limit, limit, size=self.weight.shape)
        self.bias = np.zeros(self.out_dim)

    def forward(self, x):
        self._x = x
        return x @ self.weight + self.bias

    def backward(self, dout, need_input_grad=True):
        self.dweight = self._x.T @ dout
        self.dbias = dout.sum(axis=0)
        if not need_input_grad:
            return None
        return dout @ self.weight.T


def sigmoid(z: np.ndarray) -> np.ndarray:
    out = np.empty_like(z, dtype=np.float64)
    pos = z >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-z[pos]))
    ez = np.exp(z[~pos])
    out[~pos] = ez / (1.0 + ez)
    return out


def bce_with_logits(z: np.ndarray, y: np.ndarray) -> float:
    """Mean binary cross-entropy, stable logit form: softplus(z) - y*z."""
    softplus = np.logaddexp(0.0, z)
    return float(np.mean(softplus - y * z))


def bce_with_logits_grad(z: np.ndarray, y: np.ndarray) -> np.ndarray:
    return (sigmoid(z) - y) / z.shape[0]
