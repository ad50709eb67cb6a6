"""Composite blocks for the five CNN families.

All blocks are modules; the lower-case functions are thin functional entry
points over them.
"""
from __future__ import annotations

import numpy as np

from . import tensor as T
from .conv import ConvSpec, conv2d, conv_output_size, pool2d
from .nn import BatchNorm2d, Conv2d, Dense, Module, ReLU, Sequential
from .tensor import Tensor


class VGGStack(Module):
    """``n_convs`` 3x3 stride-1 convolutions, each followed by ReLU."""

    def __init__(self, in_channels: int, channels: int, n_convs: int, padding="same",
                 kernel: int = 3, rng: np.random.Generator | None = None):
        if n_convs < 1:
            raise ValueError("a VGG stack needs at least one convolution")
        rng = rng if rng is not None else np.random.default_rng(0)
        self.convs = [Conv2d(in_channels if i == 0 else channels, channels, kernel, 1, padding, rng=rng)
                      for i in range(n_convs)]

    def forward(self, x):
        for conv in self.convs:
            x = T.relu(conv(x))
        return x

    def output_shape(self, shape):
        for i, conv in enumerate(self.convs):
            c, h, w = shape
            if h + 2 * conv.padding < conv.kernel or w + 2 * conv.padding < conv.kernel:
                raise ValueError(f"conv {i} of VGG stack: spatial extent {h}x{w} would fall below 1")
            shape = conv.output_shape(shape)
        return shape

    def shape_trace(self, shape) -> list[tuple[int, ...]]:
        trace = []
        for conv in self.convs:
            shape = conv.output_shape(shape)
            trace.append(shape)
        return trace


class SEBlock(Module):
    """Squeeze (global average) -> excite (dense, relu, dense, sigmoid) -> rescale."""

    def __init__(self, channels: int, ratio: int = 16, rng: np.random.Generator | None = None):
        if ratio < 1:
            raise ValueError(f"SE reduction ratio must be a positive integer, got {ratio}")
        rng = rng if rng is not None else np.random.default_rng(0)
        self.ratio = ratio
        self.squeeze_width = max(1, channels // ratio)
        self.fc1 = Dense(channels, self.squeeze_width, rng=rng)
        self.fc2 = Dense(self.squeeze_width, channels, rng=rng)

    def gate(self, x: Tensor) -> Tensor:
        z = T.global_avg_pool(x)
        return T.sigmoid(self.fc2(T.relu(self.fc1(z))))

    def forward(self, x):
        return T.scale_channels(x, self.gate(x))


class ResidualBlock(Module):
    """Pre-activation residual unit ``y = F(x) + shortcut(x)``.

    ``kind="basic"``: BN-ReLU-conv3x3, BN-ReLU-conv3x3.
    ``kind="grouped"``: BN-ReLU-conv1x1, BN-ReLU-grouped conv3x3, BN-ReLU-conv1x1
    (the ResNeXt bottleneck).  An optional SE block rescales F(x) before the sum.
    The shortcut is a 1x1 projection exactly when F changes the shape.
    """

    def __init__(self, in_channels: int, out_channels: int, stride: int = 1, kind: str = "basic",
                 cardinality: int = 1, width: int | None = None, se_ratio: int | None = None,
                 shortcut: str = "auto", rng: np.random.Generator | None = None):
        rng = rng if rng is not None else np.random.default_rng(0)
        self.in_channels, self.out_channels, self.stride = in_channels, out_channels, stride
        if kind == "basic":
            layers = [BatchNorm2d(in_channels), ReLU(),
                      Conv2d(in_channels, out_channels, 3, stride, rng=rng),
                      BatchNorm2d(out_channels), ReLU(),
                      Conv2d(out_channels, out_channels, 3, 1, rng=rng)]
        elif kind == "grouped":
            width = width or out_channels
            layers = [BatchNorm2d(in_channels), ReLU(),
                      Conv2d(in_channels, width, 1, 1, rng=rng),
                      BatchNorm2d(width), ReLU(),
                      Conv2d(width, width, 3, stride, groups=cardinality, rng=rng),
                      BatchNorm2d(width), ReLU(),
                      Conv2d(width, out_channels, 1, 1, rng=rng)]
        else:
            raise ValueError(f"unknown residual kind {kind!r}")
        self.branch = Sequential(*layers)
        self.se = SEBlock(out_channels, se_ratio, rng=rng) if se_ratio else None

        needs_projection = in_channels != out_channels or stride != 1
        if shortcut == "identity" and needs_projection:
            raise ValueError(
                f"identity shortcut cannot map {in_channels}ch/stride {stride} to {out_channels}ch; "
                "use a projection shortcut")
        if shortcut == "projection" or (shortcut == "auto" and needs_projection):
            self.projection = Conv2d(in_channels, out_channels, 1, stride, padding=0, rng=rng)
        else:
            self.projection = None

    @property
    def last_conv(self) -> Conv2d:
        return self.branch.layers[-1]

    def forward(self, x):
        fx = self.branch(x)
        if self.se is not None:
            fx = self.se(fx)
        sx = self.projection(x) if self.projection is not None else x
        if fx.shape != sx.shape:
            raise ValueError(f"residual shapes differ: F(x) {fx.shape} vs shortcut {sx.shape}; "
                             "use a projection shortcut")
        return fx + sx

    def output_shape(self, shape):
        c, h, w = shape
        if c != self.in_channels:
            raise ValueError(f"residual block expects {self.in_channels} channels, got {c}")
        return self.branch.output_shape(shape)


class DenseLayer(Module):
    def __init__(self, in_channels: int, growth: int, bottleneck: int | None = None,
                 rng: np.random.Generator | None = None):
        rng = rng if rng is not None else np.random.default_rng(0)
        layers: list[Module] = [BatchNorm2d(in_channels), ReLU()]
        if bottleneck:
            layers += [Conv2d(in_channels, bottleneck, 1, rng=rng), BatchNorm2d(bottleneck), ReLU()]
            in_channels = bottleneck
        layers.append(Conv2d(in_channels, growth, 3, 1, "same", rng=rng))
        self.body = Sequential(*layers)

    def forward(self, x):
        return self.body(x)


class DenseBlock(Module):
    """Dense connectivity: layer j sees ``[I, k_1, ..., k_(j-1)]`` and adds ``growth`` channels.

    ``n_layers`` counts the input as the first member, so the block holds
    ``n_layers - 1`` internal layers and returns ``in + (n_layers - 1) * growth``
    channels.
    """

    def __init__(self, in_channels: int, n_layers: int, growth: int, bottleneck: int | None = None,
                 rng: np.random.Generator | None = None):
        if n_layers < 1:
            raise ValueError("dense block needs n_layers >= 1")
        rng = rng if rng is not None else np.random.default_rng(0)
        self.in_channels, self.growth = in_channels, growth
        self.layers = [DenseLayer(in_channels + j * growth, growth, bottleneck, rng=rng)
                       for j in range(n_layers - 1)]

    @property
    def out_channels(self) -> int:
        return self.in_channels + len(self.layers) * self.growth

    def forward(self, x):
        feats = [x]
        for layer in self.layers:
            inp = feats[0] if len(feats) == 1 else T.concat(feats, axis=1)
            feats.append(layer(inp))
        return feats[0] if len(feats) == 1 else T.concat(feats, axis=1)

    def output_shape(self, shape):
        c, h, w = shape
        if c != self.in_channels:
            raise ValueError(f"dense block expects {self.in_channels} channels, got {c}")
        return (self.out_channels, h, w)


class Transition(Module):
    """BN-ReLU then downsample: a stride-2 3x3 conv, or 1x1 conv + 2x2 average pool."""

    def __init__(self, in_channels: int, out_channels: int, mode: str = "conv",
                 rng: np.random.Generator | None = None):
        rng = rng if rng is not None else np.random.default_rng(0)
        self.mode = mode
        self.norm = BatchNorm2d(in_channels)
        if mode == "conv":
            self.conv = Conv2d(in_channels, out_channels, 3, 2, padding=1, rng=rng)
        elif mode == "avg":
            self.conv = Conv2d(in_channels, out_channels, 1, 1, padding=0, rng=rng)
        else:
            raise ValueError(f"unknown transition mode {mode!r}")

    def forward(self, x):
        x = self.conv(T.relu(self.norm(x)))
        if self.mode == "avg":
            x = pool2d(x, 2, 2, "average")
        return x

    def output_shape(self, shape):
        shape = self.conv.output_shape(shape)
        if self.mode == "avg":
            c, h, w = shape
            shape = (c, conv_output_size(ConvSpec(h, 2, 2)), conv_output_size(ConvSpec(w, 2, 2)))
        return shape


# -- functional entry points -------------------------------------------------

def residual_block(x: Tensor, block: ResidualBlock) -> Tensor:
    return block(x)


def dense_block(x: Tensor, block: DenseBlock) -> Tensor:
    return block(x)


def se_block(x: Tensor, block: SEBlock) -> Tensor:
    return block(x)


def grouped_conv(x: Tensor, weight: Tensor, groups: int, bias: Tensor | None = None,
                 stride: int = 1, padding=0) -> Tensor:
    """Split channels into ``groups``, convolve each independently, concatenate."""
    return conv2d(x, weight, bias, stride, padding, groups)


def vgg_stack(x: Tensor, n_convs: int, channels: int, padding=0, seed: int = 0) -> Tensor:
    stack = VGGStack(x.shape[1], channels, n_convs, padding, rng=np.random.default_rng(seed))
    stack.output_shape(x.shape[1:])
    return stack(x)
