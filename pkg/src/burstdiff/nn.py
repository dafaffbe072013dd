"""Minimal layer library with hand-derived backpropagation.

The denoiser architectures are small and fixed, so the layers keep explicit
forward caches and implement their own gradients; there is no autodiff graph.
Every layer follows the same protocol:

    y = layer.forward(x)        # caches what backward needs
    dx = layer.backward(dy)     # accumulates into param.grad

Parameter gradients accumulate across backward calls until ``zero_grad``.
Convolutions are im2col + matmul; the gradient identities are checked against
central finite differences in the test suite.
"""

from __future__ import annotations

import numpy as np

from .tensorops import RngStream


class Param:
    __slots__ = ("name", "value", "grad")

    def __init__(self, name: str, value: np.ndarray):
        self.name = name
        self.value = value
        self.grad = np.zeros_like(value)


def _windows(xp: np.ndarray, k: int, h: int, w: int) -> np.ndarray:
    # xp padded [B,C,H+2p,W+2p] -> view [B,C,H,W,k,k]
    s = xp.strides
    b, c = xp.shape[:2]
    return np.lib.stride_tricks.as_strided(
        xp, (b, c, h, w, k, k), (s[0], s[1], s[2], s[3], s[2], s[3])
    )


class Conv2d:
    """k x k convolution, stride 1, 'same' zero padding."""

    def __init__(self, cin: int, cout: int, ksize: int, rng: RngStream, name: str, dtype=np.float32):
        fan_in = cin * ksize * ksize
        scale = np.sqrt(1.0 / fan_in)
        w = (rng.normal((cout, cin, ksize, ksize), dtype=np.float64) * scale).astype(dtype)
        self.weight = Param(f"{name}.weight", w)
        self.bias = Param(f"{name}.bias", np.zeros(cout, dtype=dtype))
        self.ksize = ksize
        self.pad = ksize // 2
        self._cache = None

    def params(self):
        return [self.weight, self.bias]

    def forward(self, x: np.ndarray) -> np.ndarray:
        b, c, h, w = x.shape
        k, p = self.ksize, self.pad
        xp = np.pad(x, ((0, 0), (0, 0), (p, p), (p, p)))
        col = _windows(xp, k, h, w).transpose(0, 2, 3, 1, 4, 5).reshape(b * h * w, c * k * k)
        wm = self.weight.value.reshape(self.weight.value.shape[0], -1).T  # [ckk, O]
        y = col @ wm + self.bias.value
        self._cache = (col, (b, c, h, w))
        return y.reshape(b, h, w, -1).transpose(0, 3, 1, 2)

    def backward(self, dy: np.ndarray) -> np.ndarray:
        col, (b, c, h, w) = self._cache
        k, p = self.ksize, self.pad
        cout = dy.shape[1]
        dy_mat = dy.transpose(0, 2, 3, 1).reshape(b * h * w, cout)
        self.weight.grad += (col.T @ dy_mat).T.reshape(self.weight.value.shape)
        self.bias.grad += dy_mat.sum(axis=0)
        # scatter column gradients back to the padded input
        dcol = (dy_mat @ self.weight.value.reshape(cout, -1)).reshape(b, h, w, c, k, k)
        dxp = np.zeros((b, c, h + 2 * p, w + 2 * p), dtype=dy.dtype)
        for ky in range(k):
            for kx in range(k):
                dxp[:, :, ky:ky + h, kx:kx + w] += dcol[:, :, :, :, ky, kx].transpose(0, 3, 1, 2)
        return dxp[:, :, p:p + h, p:p + w]


class Dense:
    def __init__(self, nin: int, nout: int, rng: RngStream, name: str, dtype=np.float32):
        scale = np.sqrt(1.0 / nin)
        w = (rng.normal((nin, nout), dtype=np.float64) * scale).astype(dtype)
        self.weight = Param(f"{name}.weight", w)
        self.bias = Param(f"{name}.bias", np.zeros(nout, dtype=dtype))
        self._cache = None

    def params(self):
        return [self.weight, self.bias]

    def forward(self, x: np.ndarray) -> np.ndarray:
        self._cache = x
        return x @ self.weight.value + self.bias.value

    def backward(self, dy: np.ndarray) -> np.ndarray:
        x = self._cache
        self.weight.grad += x.T @ dy
        self.bias.grad += dy.sum(axis=0)
        return dy @ self.weight.value.T


class SiLU:
    """x * sigmoid(x); smooth, so finite-difference checks are well behaved."""

    def __init__(self):
        self._cache = None

    def params(self):
        return []

    def forward(self, x: np.ndarray) -> np.ndarray:
        s = 1.0 / (1.0 + np.exp(-x))
        self._cache = (x, s)
        return x * s

    def backward(self, dy: np.ndarray) -> np.ndarray:
        x, s = self._cache
        return dy * (s * (1.0 + x * (1.0 - s)))


class AvgPool2:
    """2x2 average pooling, stride 2."""

    def params(self):
        return []

    def forward(self, x: np.ndarray) -> np.ndarray:
        b, c, h, w = x.shape
        self._shape = x.shape
        return x.reshape(b, c, h // 2, 2, w // 2, 2).mean(axis=(3, 5))

    def backward(self, dy: np.ndarray) -> np.ndarray:
        return np.repeat(np.repeat(dy, 2, axis=2), 2, axis=3) * 0.25


class Upsample2:
    """Nearest-neighbour 2x upsampling."""

    def params(self):
        return []

    def forward(self, x: np.ndarray) -> np.ndarray:
        return np.repeat(np.repeat(x, 2, axis=2), 2, axis=3)

    def backward(self, dy: np.ndarray) -> np.ndarray:
        b, c, h, w = dy.shape
        return dy.reshape(b, c, h // 2, 2, w // 2, 2).sum(axis=(3, 5))


class Adam:
    """Standard Adam with fixed update order; deterministic given the data."""

    def __init__(self, params, lr: float = 1e-3, beta1: float = 0.9, beta2: float = 0.999, eps: float = 1e-8):
        self.params = list(params)
        self.lr = lr
        self.beta1 = beta1
        self.beta2 = beta2
        self.eps = eps
        self.t = 0
        self.m = [np.zeros_like(p.value) for p in self.params]
        self.v = [np.zeros_like(p.value) for p in self.params]

    def step(self):
        self.t += 1
        b1c = 1.0 - self.beta1**self.t
        b2c = 1.0 - self.beta2**self.t
        for p, m, v in zip(self.params, self.m, self.v):
            g = p.grad
            m *= self.beta1
            m += (1.0 - self.beta1) * g
            v *= self.beta2
            v += (1.0 - self.beta2) * g * g
            p.value -= (self.lr / b1c) * m / (np.sqrt(v / b2c) + self.eps)

    def zero_grad(self):
        for p in self.params:
            p.grad[...] = 0.0
