"""Primitive layers with hand-written backward passes."""

from __future__ import annotations

import numpy as np

LN_EPS = 1e-5


def silu(x):
    s = 1.0 / (1.0 + np.exp(-x))
    return x * s


def silu_backward(dout, x):
    s = 1.0 / (1.0 + np.exp(-x))
    return dout * s * (1.0 + x * (1.0 - s))


def layer_norm(x, gamma, beta):
    """Normalize over the last axis; returns (y, cache)."""
    mean = x.mean(axis=-1, keepdims=True)
    var = ((x - mean) ** 2).mean(axis=-1, keepdims=True)
    inv = 1.0 / np.sqrt(var + LN_EPS)
    xhat = (x - mean) * inv
    return gamma * xhat + beta, (xhat, inv)


def layer_norm_backward(dout, cache, gamma):
    xhat, inv = cache
    d = xhat.shape[-1]
    dxhat = dout * gamma
    term = dxhat - dxhat.mean(axis=-1, keepdims=True) \
        - xhat * (dxhat * xhat).mean(axis=-1, keepdims=True)
    dx = inv * term
    axes = tuple(range(dout.ndim - 1))
    dgamma = (dout * xhat).sum(axis=axes)
    dbeta = dout.sum(axis=axes)
    return dx, dgamma, dbeta


def _im2col(x):
    """3x3 same-padding patches of a (T, H, W, C) tensor -> (T, H, W, 9C)."""
    t, h, w, c = x.shape
    xp = np.zeros((t, h + 2, w + 2, c), dtype=x.dtype)
    xp[:, 1:h + 1, 1:w + 1] = x
    cols = np.empty((t, h, w, 9 * c), dtype=x.dtype)
    for idx in range(9):
        ky, kx = divmod(idx, 3)
        cols[..., idx * c:(idx + 1) * c] = xp[:, ky:ky + h, kx:kx + w]
    return cols


def conv3x3(x, w, b):
    """3x3 convolution with same padding; w is (9*C_in, C_out)."""
    cols = _im2col(x)
    return cols @ w + b, cols


def conv3x3_backward(dout, cols, w, in_channels):
    t, h, width, _ = dout.shape
    dw = cols.reshape(-1, cols.shape[-1]).T @ dout.reshape(-1, dout.shape[-1])
    db = dout.sum(axis=(0, 1, 2))
    dcols = (dout @ w.T).reshape(t, h, width, 3, 3, in_channels)
    dxp = np.zeros((t, h + 2, width + 2, in_channels), dtype=dout.dtype)
    for ky in range(3):
        for kx in range(3):
            dxp[:, ky:ky + h, kx:kx + width] += dcols[:, :, :, ky, kx]
    return dxp[:, 1:h + 1, 1:width + 1], dw, db


class Adam:
    """Plain Adam over a dict of named parameter arrays."""

    def __init__(self, param_names, lr=2e-3, beta1=0.9, beta2=0.999, eps=1e-8):
        self.lr = lr
        self.beta1 = beta1
        self.beta2 = beta2
        self.eps = eps
        self.step_count = 0
        self.m = {n: None for n in param_names}
        self.v = {n: None for n in param_names}

    def update(self, params, grads):
        self.step_count += 1
        b1, b2 = self.beta1, self.beta2
        corr1 = 1.0 - b1**self.step_count
        corr2 = 1.0 - b2**self.step_count
        for name, g in grads.items():
            if self.m[name] is None:
                self.m[name] = np.zeros_like(params[name])
                self.v[name] = np.zeros_like(params[name])
            m = self.m[name]
            v = self.v[name]
            m *= b1
            m += (1.0 - b1) * g
            v *= b2
            v += (1.0 - b2) * g * g
            params[name] -= self.lr * (m / corr1) / (np.sqrt(v / corr2) + self.eps)
