"""Minimal module system: parameter registration, modes, and basic layers."""
from __future__ import annotations

from typing import Iterator

import numpy as np

from . import tensor as T
from .conv import ConvSpec, conv2d, conv_output_size, pool2d, resolve_padding
from .tensor import Tensor


class Parameter(Tensor):
    def __init__(self, data, dtype=None):
        super().__init__(data, requires_grad=True, dtype=dtype)


class Buffer(Tensor):
    """Non-trainable state that is saved with the model (e.g. running stats)."""


class Module:
    training = True
    frozen = False

    def __call__(self, x):
        return self.forward(x)

    def forward(self, x):
        raise NotImplementedError

    def output_shape(self, shape: tuple[int, ...]) -> tuple[int, ...]:
        return shape

    def children(self) -> Iterator[tuple[str, "Module"]]:
        for name, value in vars(self).items():
            if isinstance(value, Module):
                yield name, value
            elif isinstance(value, (list, tuple)):
                for i, v in enumerate(value):
                    if isinstance(v, Module):
                        yield f"{name}.{i}", v

    def modules(self) -> Iterator["Module"]:
        yield self
        for _, child in self.children():
            yield from child.modules()

    def _named(self, kind, prefix: str = "") -> Iterator[tuple[str, Tensor]]:
        for name, value in vars(self).items():
            if isinstance(value, kind):
                yield prefix + name, value
        for name, child in self.children():
            yield from child._named(kind, f"{prefix}{name}.")

    def named_parameters(self, prefix: str = "") -> Iterator[tuple[str, Parameter]]:
        return self._named(Parameter, prefix)

    def named_buffers(self, prefix: str = "") -> Iterator[tuple[str, Buffer]]:
        return self._named(Buffer, prefix)

    def parameters(self) -> list[Parameter]:
        return [p for _, p in self.named_parameters()]

    def state_dict(self) -> dict[str, Tensor]:
        """Parameters followed by buffers, in registration order."""
        out = dict(self.named_parameters())
        out.update(self.named_buffers())
        return out

    def train(self, mode: bool = True) -> "Module":
        for m in self.modules():
            m.training = mode
        return self

    def eval(self) -> "Module":
        return self.train(False)

    def zero_grad(self) -> None:
        for p in self.parameters():
            p.grad = None

    def astype(self, dtype) -> "Module":
        for _, t in list(self.named_parameters()) + list(self.named_buffers()):
            t.data = t.data.astype(dtype)
        return self


def he_normal(rng: np.random.Generator, shape: tuple[int, ...], fan_in: int) -> np.ndarray:
    return (rng.standard_normal(shape) * np.sqrt(2.0 / fan_in)).astype(np.float32)


class Conv2d(Module):
    def __init__(self, in_channels: int, out_channels: int, kernel: int, stride: int = 1,
                 padding="same", groups: int = 1, bias: bool = True,
                 rng: np.random.Generator | None = None):
        if in_channels % groups or out_channels % groups:
            raise ValueError(f"channels {in_channels}->{out_channels} not divisible by groups={groups}")
        rng = rng if rng is not None else np.random.default_rng(0)
        self.in_channels, self.out_channels = in_channels, out_channels
        self.kernel, self.stride, self.groups = kernel, stride, groups
        self.padding = resolve_padding(padding, kernel)
        fan_in = in_channels // groups * kernel * kernel
        self.weight = Parameter(he_normal(rng, (out_channels, in_channels // groups, kernel, kernel), fan_in))
        self.bias = Parameter(np.zeros(out_channels, np.float32)) if bias else None

    def forward(self, x):
        return conv2d(x, self.weight, self.bias, self.stride, self.padding, self.groups)

    def output_shape(self, shape):
        c, h, w = shape
        if c != self.in_channels:
            raise ValueError(f"conv expects {self.in_channels} channels, got {c}")
        return (self.out_channels,
                conv_output_size(ConvSpec(h, self.kernel, self.stride, self.padding)),
                conv_output_size(ConvSpec(w, self.kernel, self.stride, self.padding)))


class BatchNorm2d(Module):
    def __init__(self, channels: int, eps: float = 1e-5, momentum: float = 0.9):
        self.eps, self.momentum = eps, momentum
        self.gamma = Parameter(np.ones(channels, np.float32))
        self.beta = Parameter(np.zeros(channels, np.float32))
        self.running_mean = Buffer(np.zeros(channels, np.float32))
        self.running_var = Buffer(np.ones(channels, np.float32))

    def forward(self, x):
        # frozen layers behave as in inference, so their statistics stay put
        training = self.training and not self.frozen
        return T.batchnorm(x, self.gamma, self.beta, self.running_mean.data,
                           self.running_var.data, training, self.eps, self.momentum)


class Dense(Module):
    def __init__(self, in_features: int, out_features: int, rng: np.random.Generator | None = None):
        rng = rng if rng is not None else np.random.default_rng(0)
        self.in_features, self.out_features = in_features, out_features
        self.weight = Parameter(he_normal(rng, (out_features, in_features), in_features))
        self.bias = Parameter(np.zeros(out_features, np.float32))

    def forward(self, x):
        return T.dense(x, self.weight, self.bias)

    def output_shape(self, shape):
        if shape != (self.in_features,):
            raise ValueError(f"dense expects ({self.in_features},), got {shape}")
        return (self.out_features,)


class ReLU(Module):
    def forward(self, x):
        return T.relu(x)


class Dropout(Module):
    def __init__(self, rate: float, seed: int = 0):
        if not 0.0 <= rate < 1.0:
            raise ValueError(f"dropout rate must lie in [0, 1), got {rate}")
        self.rate = rate
        self.rng = np.random.default_rng(seed)

    def reseed(self, seed) -> None:
        self.rng = np.random.default_rng(seed)

    def forward(self, x):
        return T.dropout(x, self.rate, self.training, rng=self.rng)


class MaxPool2d(Module):
    def __init__(self, window: int = 2, stride: int | None = None, mode: str = "max"):
        self.window, self.stride, self.mode = window, stride or window, mode

    def forward(self, x):
        return pool2d(x, self.window, self.stride, self.mode)

    def output_shape(self, shape):
        c, h, w = shape
        if self.window > h or self.window > w:
            raise ValueError(f"pool window {self.window} larger than input {h}x{w}")
        return (c, conv_output_size(ConvSpec(h, self.window, self.stride)),
                conv_output_size(ConvSpec(w, self.window, self.stride)))


class GlobalAvgPool(Module):
    def forward(self, x):
        return T.global_avg_pool(x)

    def output_shape(self, shape):
        return (shape[0],)


class Sequential(Module):
    def __init__(self, *layers: Module):
        self.layers = list(layers)

    def forward(self, x):
        for layer in self.layers:
            x = layer(x)
        return x

    def output_shape(self, shape):
        for layer in self.layers:
            shape = layer.output_shape(shape)
        return shape
