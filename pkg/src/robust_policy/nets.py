"""Small numpy feed-forward networks with hand-written backprop.

Parameters live in one flat vector so policies and learners can be updated,
copied and compared as plain arrays.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np


@dataclass(frozen=True)
class MLPShape:
    """Layer sizes ``(d_in, h_1, ..., h_k, d_out)``; no hidden layers means affine."""

    sizes: tuple[int, ...]

    @property
    def n_params(self) -> int:
        return sum(i * o + o for i, o in zip(self.sizes[:-1], self.sizes[1:]))

    @property
    def d_in(self) -> int:
        return self.sizes[0]

    @property
    def d_out(self) -> int:
        return self.sizes[-1]

    def unpack(self, theta: np.ndarray) -> list[tuple[np.ndarray, np.ndarray]]:
        layers, k = [], 0
        for i, o in zip(self.sizes[:-1], self.sizes[1:]):
            W = theta[k:k + i * o].reshape(i, o)
            k += i * o
            b = theta[k:k + o]
            k += o
            layers.append((W, b))
        return layers

    def init(self, rng: np.random.Generator, scale: float | None = None) -> np.ndarray:
        """``scale=None`` draws every layer from U(-1/sqrt(fan_in), 1/sqrt(fan_in)).

        Random biases matter here: with zero biases every first-layer ReLU of a
        scalar input kinks at x = 0. A number gives U(-scale, scale) for all.
        """
        if scale is not None:
            return rng.uniform(-scale, scale, self.n_params)
        parts = []
        for i, o in zip(self.sizes[:-1], self.sizes[1:]):
            lim = 1.0 / np.sqrt(i)
            parts.append(rng.uniform(-lim, lim, i * o))
            parts.append(rng.uniform(-lim, lim, o))
        return np.concatenate(parts)


def forward(shape: MLPShape, theta: np.ndarray, X: np.ndarray):
    """Return outputs (n, d_out) and the cache needed by :func:`backward`."""
    layers = shape.unpack(theta)
    h = X
    cache = [h]
    for j, (W, b) in enumerate(layers):
        z = h @ W + b
        if j < len(layers) - 1:
            h = np.maximum(z, 0.0)
        else:
            h = z
        cache.append(h)
    return h, cache


def backward(shape: MLPShape, theta: np.ndarray, cache, g_out: np.ndarray) -> np.ndarray:
    """Gradient of ``sum(g_out * outputs)`` with respect to the flat parameters."""
    layers = shape.unpack(theta)
    grads = []
    g = g_out
    for j in range(len(layers) - 1, -1, -1):
        W, _ = layers[j]
        h_in = cache[j]
        grads.append((h_in.T @ g, g.sum(axis=0)))
        if j > 0:
            g = (g @ W.T) * (cache[j] > 0)
    flat = []
    for gW, gb in reversed(grads):
        flat.append(gW.ravel())
        flat.append(gb)
    return np.concatenate(flat)


class Adam:
    """Plain Adam on a flat parameter vector."""

    def __init__(self, lr: float, beta1: float = 0.9, beta2: float = 0.999, eps: float = 1e-8):
        self.lr, self.beta1, self.beta2, self.eps = lr, beta1, beta2, eps
        self.m = self.v = None
        self.t = 0

    def step(self, theta: np.ndarray, grad: np.ndarray) -> np.ndarray:
        if self.m is None:
            self.m = np.zeros_like(theta)
            self.v = np.zeros_like(theta)
        self.t += 1
        self.m = self.beta1 * self.m + (1 - self.beta1) * grad
        self.v = self.beta2 * self.v + (1 - self.beta2) * grad**2
        mhat = self.m / (1 - self.beta1**self.t)
        vhat = self.v / (1 - self.beta2**self.t)
        return theta - self.lr * mhat / (np.sqrt(vhat) + self.eps)


def log_softmax(s: np.ndarray) -> np.ndarray:
    s = s - s.max(axis=1, keepdims=True)
    return s - np.log(np.exp(s).sum(axis=1, keepdims=True))


def softmax(s: np.ndarray) -> np.ndarray:
    return np.exp(log_softmax(s))
