"""Small tanh MLPs with hand-written reverse-mode gradients and Adam.

Everything is plain float64 numpy; no autograd framework.  The networks
here are the policy mean head (tanh output) and the value head (linear
output), both 576 -> 64 -> 64 -> 1.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

__all__ = ["MLP", "init_mlp", "mlp_forward", "mlp_backward", "Adam", "sgd_step"]


@dataclass
class MLP:
    """Weight matrices (in x out) and bias vectors for each layer."""

    weights: list[np.ndarray]
    biases: list[np.ndarray]

    @property
    def dims(self) -> list[int]:
        return [self.weights[0].shape[0]] + [w.shape[1] for w in self.weights]

    def arrays(self) -> list[np.ndarray]:
        out = []
        for w, b in zip(self.weights, self.biases):
            out.extend([w, b])
        return out

    def copy(self) -> "MLP":
        return MLP([w.copy() for w in self.weights], [b.copy() for b in self.biases])


def init_mlp(dims: list[int], rng: np.random.Generator, *, out_scale: float = 1.0) -> MLP:
    """Xavier-uniform layers; the output layer optionally scaled down."""
    weights, biases = [], []
    for i in range(len(dims) - 1):
        fan_in, fan_out = dims[i], dims[i + 1]
        bound = np.sqrt(6.0 / (fan_in + fan_out))
        w = rng.uniform(-bound, bound, size=(fan_in, fan_out))
        if i == len(dims) - 2:
            w *= out_scale
        weights.append(w)
        biases.append(np.zeros(fan_out))
    return MLP(weights, biases)


def mlp_forward(net: MLP, x: np.ndarray, *, out_tanh: bool) -> tuple[np.ndarray, list]:
    """Batched forward pass; returns (B,) outputs and the activation cache."""
    h = np.atleast_2d(x)
    cache = [h]
    n = len(net.weights)
    for i in range(n):
        a = h @ net.weights[i] + net.biases[i]
        if i < n - 1 or out_tanh:
            h = np.tanh(a)
        else:
            h = a
        cache.append(h)
    return h[:, 0], cache


def mlp_backward(net: MLP, cache: list, d_out: np.ndarray, *, out_tanh: bool) -> MLP:
    """Gradients of sum(d_out * output) w.r.t. every weight and bias."""
    n = len(net.weights)
    g_w = [None] * n
    g_b = [None] * n
    delta = np.atleast_2d(d_out).reshape(-1, 1)
    for i in range(n - 1, -1, -1):
        h_out = cache[i + 1]
        if i < n - 1 or out_tanh:
            delta = delta * (1.0 - h_out * h_out)
        g_w[i] = cache[i].T @ delta
        g_b[i] = delta.sum(axis=0)
        if i > 0:
            delta = delta @ net.weights[i].T
    return MLP(g_w, g_b)


class Adam:
    """Per-array first/second-moment steps with bias correction."""

    def __init__(self, arrays: list[np.ndarray], lr: float, beta1=0.9, beta2=0.999, eps=1e-8):
        self.lr = lr
        self.beta1 = beta1
        self.beta2 = beta2
        self.eps = eps
        self.t = 0
        self.m = [np.zeros_like(a) for a in arrays]
        self.v = [np.zeros_like(a) for a in arrays]

    def step(self, arrays: list[np.ndarray], grads: list[np.ndarray]) -> None:
        self.t += 1
        b1t = 1.0 - self.beta1**self.t
        b2t = 1.0 - self.beta2**self.t
        for a, g, m, v in zip(arrays, grads, self.m, self.v):
            m *= self.beta1
            m += (1.0 - self.beta1) * g
            v *= self.beta2
            v += (1.0 - self.beta2) * g * g
            a -= self.lr * (m / b1t) / (np.sqrt(v / b2t) + self.eps)


def sgd_step(arrays: list[np.ndarray], grads: list[np.ndarray], lr: float) -> None:
    for a, g in zip(arrays, grads):
        a -= lr * g
