"""Parameterized layers built on the autodiff primitives.

Layers hold their weights as ``Variable`` leaves and expose
``named_parameters()`` (trainable tensors, deterministic order) and
``named_buffers()`` (non-trainable state such as batch-norm running
statistics).  Forward passes take a ``training`` flag rather than storing a
mode, so one model instance can serve both phases.
"""

from __future__ import annotations

import math

import numpy as np

from . import autodiff as ad
from .autodiff import Variable

__all__ = ["he_init", "ConvLayer", "BatchNorm2d", "Linear", "Dropout"]


def he_init(shape: tuple[int, ...], rng: np.random.Generator,
            dtype=np.float32) -> np.ndarray:
    """Kaiming-normal weights: N(0, sqrt(2 / fan_in)) per element."""
    if len(shape) < 2:
        raise ValueError(f"he_init expects a weight shape, got {shape}")
    fan_in = int(np.prod(shape[1:]))
    std = math.sqrt(2.0 / fan_in)
    return (rng.standard_normal(shape) * std).astype(dtype)


class ConvLayer:
    """2-D convolution with He-initialized kernel and optional bias.

    ``padding`` defaults to kernel_size // 2, which keeps spatial size at
    stride 1.  Blocks that follow the conv with batch norm should pass
    ``bias=False``; the bias would be cancelled by normalization.
    """

    def __init__(self, in_channels: int, out_channels: int, kernel_size: int,
                 stride: int = 1, padding: int | None = None, bias: bool = False,
                 rng: np.random.Generator | None = None, dtype=np.float32):
        if in_channels < 1 or out_channels < 1:
            raise ValueError("channel counts must be positive")
        if kernel_size < 1:
            raise ValueError(f"kernel_size must be >= 1, got {kernel_size}")
        rng = rng if rng is not None else np.random.default_rng(0)
        self.in_channels = in_channels
        self.out_channels = out_channels
        self.kernel_size = kernel_size
        self.stride = stride
        self.padding = kernel_size // 2 if padding is None else padding
        self.kernel = Variable(
            he_init((out_channels, in_channels, kernel_size, kernel_size), rng, dtype),
            requires_grad=True)
        self.bias = (Variable(np.zeros(out_channels, dtype=dtype), requires_grad=True)
                     if bias else None)

    def forward(self, x, training: bool = False) -> Variable:
        out = ad.conv2d(x, self.kernel, self.stride, self.padding)
        if self.bias is not None:
            out = ad.add(out, ad.reshape(self.bias, (1, self.out_channels, 1, 1)))
        return out

    def named_parameters(self):
        params = [("kernel", self.kernel)]
        if self.bias is not None:
            params.append(("bias", self.bias))
        return params

    def named_buffers(self):
        return []


class BatchNorm2d:
    """Per-channel batch normalization with running statistics.

    Training uses batch statistics (biased variance) and folds them into the
    running estimates as running = (1 - momentum) * running + momentum * batch.
    Evaluation applies the frozen running statistics.
    """

    def __init__(self, channels: int, eps: float = 1e-5, momentum: float = 0.1,
                 dtype=np.float32):
        if channels < 1:
            raise ValueError("channels must be positive")
        if not 0.0 < momentum <= 1.0:
            raise ValueError(f"momentum must be in (0, 1], got {momentum}")
        self.channels = channels
        self.eps = eps
        self.momentum = momentum
        self.dtype = dtype
        self.gamma = Variable(np.ones(channels, dtype=dtype), requires_grad=True)
        self.beta = Variable(np.zeros(channels, dtype=dtype), requires_grad=True)
        self.running_mean = np.zeros(channels, dtype=dtype)
        self.running_var = np.ones(channels, dtype=dtype)

    def forward(self, x, training: bool = False) -> Variable:
        if training:
            out, mu, var = ad.batchnorm_train(x, self.gamma, self.beta, self.eps)
            m = self.momentum
            self.running_mean = ((1.0 - m) * self.running_mean
                                 + m * mu).astype(self.dtype)
            self.running_var = ((1.0 - m) * self.running_var
                                + m * var).astype(self.dtype)
            return out
        return ad.batchnorm_eval(x, self.gamma, self.beta,
                                 self.running_mean, self.running_var, self.eps)

    def named_parameters(self):
        return [("gamma", self.gamma), ("beta", self.beta)]

    def named_buffers(self):
        return [("running_mean", self.running_mean),
                ("running_var", self.running_var)]

    def set_buffer(self, name: str, value: np.ndarray) -> None:
        if name not in ("running_mean", "running_var"):
            raise KeyError(name)
        setattr(self, name, np.asarray(value, dtype=self.dtype))


class Linear:
    """Fully connected layer: x @ weight.T + bias.

    Default init is He-normal (hidden layers feeding a relu).  A classifier
    head has no relu after it and needs near-uniform initial predictions,
    so callers can pin a small absolute weight_std instead.
    """

    def __init__(self, in_features: int, out_features: int,
                 rng: np.random.Generator | None = None, dtype=np.float32,
                 weight_std: float | None = None):
        rng = rng if rng is not None else np.random.default_rng(0)
        self.in_features = in_features
        self.out_features = out_features
        if weight_std is None:
            w = he_init((out_features, in_features), rng, dtype)
        else:
            w = rng.normal(0.0, weight_std,
                           (out_features, in_features)).astype(dtype)
        self.weight = Variable(w, requires_grad=True)
        self.bias = Variable(np.zeros(out_features, dtype=dtype), requires_grad=True)

    def forward(self, x, training: bool = False) -> Variable:
        return ad.linear(x, self.weight, self.bias)

    def named_parameters(self):
        return [("weight", self.weight), ("bias", self.bias)]

    def named_buffers(self):
        return []


class Dropout:
    """Inverted dropout: train-time masks are scaled by 1/(1-rate) so the
    expectation matches the identity map evaluation uses."""

    def __init__(self, rate: float = 0.5, seed: int = 0):
        if not 0.0 <= rate < 1.0:
            raise ValueError(f"dropout rate must be in [0, 1), got {rate}")
        self.rate = rate
        self._seed = seed
        self.rng = np.random.default_rng(seed)

    def reseed(self, seed: int | None = None) -> None:
        """Reset the mask stream (for deterministic replay)."""
        self.rng = np.random.default_rng(self._seed if seed is None else seed)

    def forward(self, x, training: bool = False) -> Variable:
        x = ad.as_variable(x)
        if not training or self.rate == 0.0:
            return x
        keep = 1.0 - self.rate
        mask = (self.rng.random(x.shape) < keep).astype(x.dtype) / x.dtype.type(keep)
        return ad.mul(x, Variable(mask))

    def named_parameters(self):
        return []

    def named_buffers(self):
        return []
