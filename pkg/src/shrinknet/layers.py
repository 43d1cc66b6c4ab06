"""Parameterized layers: Dense, Conv2D, BatchNorm, LSTM.

Conventions: he_normal init and L2 regularization on Conv2D/Dense kernels
only; LSTM uses Glorot-uniform weights with forget-gate bias 1; BatchNorm
uses momentum 0.99 and epsilon 1e-3.
"""

from __future__ import annotations

import numpy as np

from . import tensor as T
from .tensor import Tensor

BN_MOMENTUM = 0.99
BN_EPS = 1e-3


def he_normal(shape, fan_in: int, rng: np.random.Generator, dtype=None) -> Tensor:
    """N(0, 2/fan_in) samples, the he_normal initializer."""
    if fan_in < 1:
        raise ValueError("fan_in must be >= 1")
    std = np.sqrt(2.0 / fan_in)
    data = rng.normal(0.0, std, size=shape)
    return Tensor(data, requires_grad=True, dtype=dtype or T.get_default_dtype())


def glorot_uniform(shape, fan_in: int, fan_out: int, rng: np.random.Generator, dtype=None) -> Tensor:
    limit = np.sqrt(6.0 / (fan_in + fan_out))
    data = rng.uniform(-limit, limit, size=shape)
    return Tensor(data, requires_grad=True, dtype=dtype or T.get_default_dtype())


class Layer:
    """Base: named parameter traversal for checkpointing and optimizers."""

    def named_params(self, prefix: str):
        raise NotImplementedError

    def named_buffers(self, prefix: str):
        """Non-trainable state (BN running stats); empty by default."""
        return []


class Dense(Layer):
    def __init__(self, din: int, dout: int, rng: np.random.Generator):
        self.din, self.dout = din, dout
        self.kernel = he_normal((din, dout), fan_in=din, rng=rng)
        self.bias = Tensor(np.zeros(dout), requires_grad=True)

    def __call__(self, x: Tensor) -> Tensor:
        lead = x.shape[:-1]
        if x.shape[-1] != self.din:
            raise ValueError(f"dense: expected last axis {self.din}, got {x.shape}")
        flat = x.reshape(-1, self.din) if x.ndim != 2 else x
        y = flat @ self.kernel + self.bias
        return y.reshape(*lead, self.dout) if x.ndim != 2 else y

    def named_params(self, prefix: str):
        return [(f"{prefix}.kernel", self.kernel), (f"{prefix}.bias", self.bias)]

    @property
    def param_count(self) -> int:
        return self.din * self.dout + self.dout


class Conv2D(Layer):
    def __init__(self, cin: int, cout: int, kh: int, kw: int, rng: np.random.Generator,
                 stride=(1, 1), dilation=(1, 1), padding: str = "same"):
        self.cin, self.cout, self.kh, self.kw = cin, cout, kh, kw
        self.stride, self.dilation, self.padding = stride, dilation, padding
        fan_in = kh * kw * cin
        self.kernel = he_normal((kh, kw, cin, cout), fan_in=fan_in, rng=rng)
        self.bias = Tensor(np.zeros(cout), requires_grad=True)

    def __call__(self, x: Tensor) -> Tensor:
        return T.conv2d(x, self.kernel, self.bias,
                        stride=self.stride, dilation=self.dilation, padding=self.padding)

    def named_params(self, prefix: str):
        return [(f"{prefix}.kernel", self.kernel), (f"{prefix}.bias", self.bias)]

    @property
    def param_count(self) -> int:
        return self.kh * self.kw * self.cin * self.cout + self.cout


class BatchNorm(Layer):
    """Channel-wise batch normalization over all non-channel axes."""

    def __init__(self, channels: int, momentum: float = BN_MOMENTUM, eps: float = BN_EPS):
        self.channels = channels
        self.momentum = momentum
        self.eps = eps
        self.gamma = Tensor(np.ones(channels), requires_grad=True)
        self.beta = Tensor(np.zeros(channels), requires_grad=True)
        # float32 so checkpoints round-trip bit-exactly
        self.running_mean = np.zeros(channels, dtype=np.float32)
        self.running_var = np.ones(channels, dtype=np.float32)
        self.initialized = False

    def __call__(self, x: Tensor, train: bool) -> Tensor:
        if x.shape[-1] != self.channels:
            raise ValueError(f"batchnorm: expected {self.channels} channels, got {x.shape}")
        if train:
            out, mu, var = T.batchnorm_train(x, self.gamma, self.beta, self.eps)
            m = self.momentum
            self.running_mean = (m * self.running_mean + (1 - m) * mu).astype(np.float32)
            self.running_var = (m * self.running_var + (1 - m) * var).astype(np.float32)
            self.initialized = True
            return out
        if not self.initialized:
            raise RuntimeError("batchnorm: inference before any training update or checkpoint load")
        dt = x.dtype
        mu = self.running_mean.astype(dt)
        sd = np.sqrt(self.running_var.astype(np.float64) + self.eps).astype(dt)
        xhat = (x - Tensor(mu)) * Tensor(1.0 / sd)
        return xhat * self.gamma + self.beta

    def named_params(self, prefix: str):
        return [(f"{prefix}.gamma", self.gamma), (f"{prefix}.beta", self.beta)]

    def named_buffers(self, prefix: str):
        return [(f"{prefix}.running_mean", self, "running_mean"),
                (f"{prefix}.running_var", self, "running_var")]


class LSTM(Layer):
    """Full-sequence LSTM; parameter count 4*(units*(din+units)+units)."""

    def __init__(self, din: int, units: int, rng: np.random.Generator):
        if units < 1:
            raise ValueError("units must be >= 1")
        self.din, self.units = din, units
        self.wx = glorot_uniform((din, 4 * units), din, units, rng)
        self.wh = glorot_uniform((units, 4 * units), units, units, rng)
        b = np.zeros(4 * units)
        b[units:2 * units] = 1.0  # forget-gate bias
        self.b = Tensor(b, requires_grad=True)

    def __call__(self, x: Tensor) -> Tensor:
        return T.lstm(x, self.wx, self.wh, self.b)

    def named_params(self, prefix: str):
        return [(f"{prefix}.wx", self.wx), (f"{prefix}.wh", self.wh), (f"{prefix}.b", self.b)]

    @property
    def param_count(self) -> int:
        return 4 * (self.units * (self.din + self.units) + self.units)


def l2_penalty(kernels, lam: float) -> Tensor:
    """lam * sum of squared entries over Conv2D/Dense kernels (biases excluded)."""
    if lam < 0:
        raise ValueError("lambda must be >= 0")
    total = Tensor(0.0)
    for k in kernels:
        total = total + (k ** 2).sum()
    return total * lam
