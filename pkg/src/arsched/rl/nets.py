"""Minimal MLP with manual backpropagation, in float64 numpy.

Kept self-contained so the policy-gradient arithmetic can be checked against
central finite differences exactly.
"""

from __future__ import annotations

import numpy as np


def init_mlp(sizes, rng):
    """Xavier-initialized layers [(W, b), ...] for tanh hiddens, linear output."""
    params = []
    for fan_in, fan_out in zip(sizes[:-1], sizes[1:]):
        scale = np.sqrt(2.0 / (fan_in + fan_out))
        params.append(
            (rng.normal(0.0, scale, size=(fan_in, fan_out)), np.zeros(fan_out))
        )
    return params


def mlp_forward(params, x):
    """x: (B, in) -> (out (B, d_out), caches for backward)."""
    h = np.atleast_2d(np.asarray(x, dtype=np.float64))
    caches = []
    last = len(params) - 1
    for i, (W, b) in enumerate(params):
        z = h @ W + b
        a = z if i == last else np.tanh(z)
        caches.append((h, a if i != last else None))
        h = a
    return h, caches


def mlp_backward(params, caches, dout):
    """dout: gradient wrt network output; returns ([(dW, db), ...], dx)."""
    grads = [None] * len(params)
    delta = np.atleast_2d(np.asarray(dout, dtype=np.float64))
    for i in range(len(params) - 1, -1, -1):
        W, _ = params[i]
        h, activ = caches[i]
        if activ is not None:  # tanh layer
            delta = delta * (1.0 - activ * activ)
        grads[i] = (h.T @ delta, delta.sum(axis=0))
        delta = delta @ W.T
    return grads, delta


def zeros_like_params(params):
    return [(np.zeros_like(W), np.zeros_like(b)) for W, b in params]


def add_grads(total, grads, scale=1.0):
    for (tW, tb), (gW, gb) in zip(total, grads):
        tW += scale * gW
        tb += scale * gb
    return total


def flatten_params(params):
    return np.concatenate([np.concatenate([W.ravel(), b.ravel()]) for W, b in params])


def set_flat_params(params, flat):
    i = 0
    for W, b in params:
        W[...] = flat[i:i + W.size].reshape(W.shape)
        i += W.size
        b[...] = flat[i:i + b.size]
        i += b.size
    assert i == len(flat)


class Adam:
    """Standard Adam over a list of (W, b) pairs, updating in place."""

    def __init__(self, params, lr=3e-4, beta1=0.9, beta2=0.999, eps=1e-8):
        self.params = params
        self.lr = lr
        self.beta1 = beta1
        self.beta2 = beta2
        self.eps = eps
        self.m = zeros_like_params(params)
        self.v = zeros_like_params(params)
        self.t = 0

    def step(self, grads):
        self.t += 1
        b1c = 1.0 - self.beta1 ** self.t
        b2c = 1.0 - self.beta2 ** self.t
        for (W, b), (mW, mb), (vW, vb), (gW, gb) in zip(self.params, self.m, self.v, grads):
            for target, m, v, g in ((W, mW, vW, gW), (b, mb, vb, gb)):
                m[...] = self.beta1 * m + (1.0 - self.beta1) * g
                v[...] = self.beta2 * v + (1.0 - self.beta2) * g * g
                target -= self.lr * (m / b1c) / (np.sqrt(v / b2c) + self.eps)
