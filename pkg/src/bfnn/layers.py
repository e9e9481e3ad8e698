"""Trainable layers with hand-derived backward passes, float64 throughout.

Batch-first convention: activations are (batch, features). Each layer caches
whatever its backward pass needs during forward(train=True); backward returns
the gradient w.r.t. its input and stores parameter gradients on the layer.
"""

from __future__ import annotations

import numpy as np


class Dense:
    def __init__(self, n_in: int, n_out: int, use_bias: bool = True):
        self.n_in = n_in
        self.n_out = n_out
        self.use_bias = use_bias
        self.W = np.zeros((n_in, n_out))
        self.b = np.zeros(n_out) if use_bias else None
        self.dW = None
        self.db = None
        self._x = None

    def init_uniform(self, rng: np.random.Generator) -> None:
        # fan-sum scaled uniform init, zero bias
        bound = np.sqrt(6.0 / (self.n_in + self.n_out))
        self.W = rng.uniform(-bound, bound, (self.n_in, self.n_out))
        if self.use_bias:
            self.b = np.zeros(self.n_out)

    def forward(self, x: np.ndarray, train: bool) -> np.ndarray:
        if x.shape[1] != self.n_in:
            raise ValueError(f"expected {self.n_in} features, got {x.shape[1]}")
        if train:
            self._x = x
        out = x @ self.W
        if self.use_bias:
            out += self.b
        return out

    def backward(self, d_out: np.ndarray) -> np.ndarray:
        if self._x is None:
            raise RuntimeError("backward before forward")
        self.dW = self._x.T @ d_out
        if self.use_bias:
            self.db = d_out.sum(axis=0)
        return d_out @ self.W.T

    def params(self):
        if self.use_bias:
            return [("W", self.W), ("b", self.b)]
        return [("W", self.W)]

    def grads(self):
        if self.use_bias:
            return [self.dW, self.db]
        return [self.dW]

    def n_params(self) -> int:
        return self.n_in * self.n_out + (self.n_out if self.use_bias else 0)

    def spec(self) -> dict:
        return {
            "kind": "dense",
            "n_in": self.n_in,
            "n_out": self.n_out,
            "use_bias": self.use_bias,
        }


class BatchNorm:
    """Per-feature normalization; batch statistics while training, running
    statistics at inference. Variances are biased (ddof=0) in both paths."""

    def __init__(self, n_features: int, momentum: float = 0.99, eps: float = 1e-5):
        self.n_features = n_features
        self.momentum = momentum
        self.eps = eps
        self.gamma = np.ones(n_features)
        self.beta = np.zeros(n_features)
        self.running_mean = np.zeros(n_features)
        self.running_var = np.ones(n_features)
        self.dgamma = None
        self.dbeta = None
        self._cache = None

    def forward(self, x: np.ndarray, train: bool) -> np.ndarray:
        if x.shape[1] != self.n_features:
            raise ValueError(f"expected {self.n_features} features, got {x.shape[1]}")
        if train:
            mean = x.mean(axis=0)
            var = x.var(axis=0)
            centered = x - mean
            inv_std = 1.0 / np.sqrt(var + self.eps)
            x_hat = centered * inv_std
            self.running_mean = self.momentum * self.running_mean + (1 - self.momentum) * mean
            self.running_var = self.momentum * self.running_var + (1 - self.momentum) * var
            self._cache = (centered, inv_std, x_hat)
            return self.gamma * x_hat + self.beta
        x_hat = (x - self.running_mean) / np.sqrt(self.running_var + self.eps)
        return self.gamma * x_hat + self.beta

    def backward(self, d_out: np.ndarray) -> np.ndarray:
        if self._cache is None:
            raise RuntimeError("backward before forward")
        centered, inv_std, x_hat = self._cache
        n = d_out.shape[0]
        self.dgamma = (d_out * x_hat).sum(axis=0)
        self.dbeta = d_out.sum(axis=0)
        d_hat = d_out * self.gamma
        d_var = (d_hat * centered * -0.5 * inv_std**3).sum(axis=0)
        d_mean = (d_hat * -inv_std).sum(axis=0) + d_var * (-2.0 * centered).mean(axis=0)
        return d_hat * inv_std + d_var * 2.0 * centered / n + d_mean / n

    def params(self):
        return [("gamma", self.gamma), ("beta", self.beta)]

    def grads(self):
        return [self.dgamma, self.dbeta]

    def stats(self):
        return [("running_mean", self.running_mean), ("running_var", self.running_var)]

    def spec(self) -> dict:
        return {
            "kind": "batchnorm",
            "n_features": self.n_features,
            "momentum": self.momentum,
            "eps": self.eps,
        }


class ReLU:
    def __init__(self):
        self._mask = None

    def forward(self, x: np.ndarray, train: bool) -> np.ndarray:
        if train:
            self._mask = x > 0
            return x * self._mask
        return np.maximum(x, 0.0)

    def backward(self, d_out: np.ndarray) -> np.ndarray:
        if self._mask is None:
            raise RuntimeError("backward before forward")
        return d_out * self._mask

    def params(self):
        return []

    def grads(self):
        return []

    def spec(self) -> dict:
        return {"kind": "relu"}
