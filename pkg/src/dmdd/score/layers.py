"""Minimal channels-last 1-D layers with hand-derived backward passes.

Activations are shaped (batch, length, channels) so every convolution tap
reduces to one GEMM on the contiguous channel axis. Each layer owns its
parameters and accumulates gradients of the same shapes in ``grads``.
"""

from __future__ import annotations

import numpy as np


class Layer:
    def __init__(self):
        self.params: dict[str, np.ndarray] = {}
        self.grads: dict[str, np.ndarray] = {}

    def zero_grads(self):
        for k, v in self.params.items():
            self.grads[k] = np.zeros_like(v)


class Conv1d(Layer):
    """Strided convolution; weight shape (k, c_in, c_out)."""

    def __init__(self, c_in, c_out, kernel=3, stride=1, pad=1, rng=None, dtype=np.float32):
        super().__init__()
        self.stride = stride
        self.pad = pad
        self.kernel = kernel
        rng = rng or np.random.default_rng()
        std = np.sqrt(2.0 / (c_in * kernel))
        self.params["w"] = (std * rng.standard_normal((kernel, c_in, c_out))).astype(dtype)
        self.params["b"] = np.zeros(c_out, dtype=dtype)
        self.zero_grads()
        self._cache = None

    def out_length(self, length: int) -> int:
        return (length + 2 * self.pad - self.kernel) // self.stride + 1

    def forward(self, x: np.ndarray) -> np.ndarray:
        b, length, c_in = x.shape
        l_out = self.out_length(length)
        xp = np.pad(x, ((0, 0), (self.pad, self.pad), (0, 0)))
        w = self.params["w"]
        y = np.broadcast_to(self.params["b"], (b, l_out, w.shape[2])).copy()
        # contiguous per-tap columns are reused by the backward pass
        cols = []
        for j in range(self.kernel):
            col = np.ascontiguousarray(
                xp[:, j : j + self.stride * l_out : self.stride, :]
            ).reshape(b * l_out, c_in)
            cols.append(col)
            y += (col @ w[j]).reshape(b, l_out, -1)
        self._cache = (cols, xp.shape, length, l_out)
        return y

    def backward(self, dy: np.ndarray) -> np.ndarray:
        cols, xp_shape, length, l_out = self._cache
        w = self.params["w"]
        dxp = np.zeros(xp_shape, dtype=dy.dtype)
        flat_dy = np.ascontiguousarray(dy).reshape(-1, dy.shape[2])
        for j in range(self.kernel):
            self.grads["w"][j] += cols[j].T @ flat_dy
            dxp[:, j : j + self.stride * l_out : self.stride, :] += (
                flat_dy @ w[j].T
            ).reshape(dy.shape[0], l_out, -1)
        self.grads["b"] += flat_dy.sum(axis=0)
        if self.pad:
            return dxp[:, self.pad : self.pad + length, :]
        return dxp


class ConvTranspose1d(Layer):
    """Fractionally-strided convolution; weight shape (k, c_in, c_out).

    Output length is (L - 1) * stride - 2 * pad + k (exact 2x upsampling for
    k=4, stride=2, pad=1).
    """

    def __init__(self, c_in, c_out, kernel=4, stride=2, pad=1, rng=None, dtype=np.float32):
        super().__init__()
        self.stride = stride
        self.pad = pad
        self.kernel = kernel
        rng = rng or np.random.default_rng()
        std = np.sqrt(2.0 / (c_in * kernel) * stride)
        self.params["w"] = (std * rng.standard_normal((kernel, c_in, c_out))).astype(dtype)
        self.params["b"] = np.zeros(c_out, dtype=dtype)
        self.zero_grads()
        self._cache = None

    def out_length(self, length: int) -> int:
        return (length - 1) * self.stride - 2 * self.pad + self.kernel

    def forward(self, x: np.ndarray) -> np.ndarray:
        b, length, _ = x.shape
        w = self.params["w"]
        full = (length - 1) * self.stride + self.kernel
        yp = np.zeros((b, full, w.shape[2]), dtype=x.dtype)
        for j in range(self.kernel):
            yp[:, j : j + self.stride * (length - 1) + 1 : self.stride, :] += x @ w[j]
        l_out = self.out_length(length)
        y = yp[:, self.pad : self.pad + l_out, :] + self.params["b"]
        self._cache = (x, full, l_out)
        return y

    def backward(self, dy: np.ndarray) -> np.ndarray:
        x, full, l_out = self._cache
        w = self.params["w"]
        dyp = np.zeros((x.shape[0], full, w.shape[2]), dtype=dy.dtype)
        dyp[:, self.pad : self.pad + l_out, :] = dy
        dx = np.zeros_like(x)
        flat_x = x.reshape(-1, x.shape[2])
        for j in range(self.kernel):
            sl = dyp[:, j : j + self.stride * (x.shape[1] - 1) + 1 : self.stride, :]
            self.grads["w"][j] += flat_x.T @ sl.reshape(-1, sl.shape[2])
            dx += sl @ w[j].T
        self.grads["b"] += dy.reshape(-1, dy.shape[2]).sum(axis=0)
        return dx


class GroupNorm(Layer):
    """Normalize over (length, channels-per-group) for each (batch, group)."""

    def __init__(self, channels, groups=8, eps=1e-5, dtype=np.float32):
        super().__init__()
        if channels % groups:
            raise ValueError("channels must be divisible by groups")
        self.groups = groups
        self.eps = eps
        self.params["gamma"] = np.ones(channels, dtype=dtype)
        self.params["beta"] = np.zeros(channels, dtype=dtype)
        self.zero_grads()
        self._cache = None

    def _group_stats(self, x):
        """Per-(batch, group) sums of x and x^2 as (B, C)-broadcastable
        channel vectors, avoiding any transposes."""
        b, length, c = x.shape
        cg = c // self.groups
        s = x.sum(axis=1).reshape(b, self.groups, cg).sum(axis=2)
        sq = np.einsum("blc,blc->bc", x, x).reshape(b, self.groups, cg).sum(axis=2)
        return s, sq

    def _per_channel(self, group_vec):
        return np.repeat(group_vec, self.params["gamma"].size // self.groups, axis=1)

    def forward(self, x: np.ndarray) -> np.ndarray:
        b, length, c = x.shape
        m = length * (c // self.groups)
        s, sq = self._group_stats(x)
        mean = s / m
        var = sq / m - mean**2
        inv_std = 1.0 / np.sqrt(np.maximum(var, 0.0) + self.eps)
        mean_c = self._per_channel(mean)[:, None, :]
        inv_c = self._per_channel(inv_std)[:, None, :]
        xhat = (x - mean_c) * inv_c
        self._cache = (xhat, inv_c, m)
        return xhat * self.params["gamma"] + self.params["beta"]

    def backward(self, dy: np.ndarray) -> np.ndarray:
        xhat, inv_c, m = self._cache
        c = dy.shape[2]
        cg = c // self.groups
        self.grads["gamma"] += np.einsum("blc,blc->c", dy, xhat)
        self.grads["beta"] += dy.sum(axis=(0, 1))
        dxhat = dy * self.params["gamma"]
        s1 = dxhat.sum(axis=1).reshape(-1, self.groups, cg).sum(axis=2)
        s2 = (
            np.einsum("blc,blc->bc", dxhat, xhat)
            .reshape(-1, self.groups, cg)
            .sum(axis=2)
        )
        s1_c = self._per_channel(s1)[:, None, :]
        s2_c = self._per_channel(s2)[:, None, :]
        return inv_c * (dxhat - (s1_c + xhat * s2_c) / m)


class ReLU(Layer):
    def __init__(self):
        super().__init__()
        self._mask = None

    def forward(self, x: np.ndarray) -> np.ndarray:
        self._mask = x > 0
        # callers always feed a fresh tensor, so clip in place
        return np.maximum(x, 0, out=x)

    def backward(self, dy: np.ndarray) -> np.ndarray:
        dy = dy * self._mask
        return dy


class Dense(Layer):
    """Affine map for the time-embedding projections, (batch, n_in) input."""

    def __init__(self, n_in, n_out, rng=None, dtype=np.float32):
        super().__init__()
        rng = rng or np.random.default_rng()
        std = np.sqrt(1.0 / n_in)
        self.params["w"] = (std * rng.standard_normal((n_in, n_out))).astype(dtype)
        self.params["b"] = np.zeros(n_out, dtype=dtype)
        self.zero_grads()
        self._cache = None

    def forward(self, x: np.ndarray) -> np.ndarray:
        self._cache = x
        return x @ self.params["w"] + self.params["b"]

    def backward(self, dy: np.ndarray) -> np.ndarray:
        x = self._cache
        self.grads["w"] += x.T @ dy
        self.grads["b"] += dy.sum(axis=0)
        return dy @ self.params["w"].T


def sinusoidal_embedding(t: np.ndarray, dim: int, dtype=np.float32) -> np.ndarray:
    """Fixed sin/cos features of the diffusion time, shape (batch, dim).

    Times in [0, 1] are stretched by 1000 so the feature bank spans several
    octaves of variation across the schedule.
    """
    if dim % 2:
        raise ValueError("embedding dim must be even")
    half = dim // 2
    freqs = np.exp(-np.log(10000.0) * np.arange(half) / max(half - 1, 1))
    ang = 1000.0 * np.atleast_1d(np.asarray(t, dtype=float))[:, None] * freqs
    return np.concatenate([np.sin(ang), np.cos(ang)], axis=1).astype(dtype)
