"""Declarative construction of the five network families.

Each family is a stem, a list of stages, and a shared classification head
(global average pool -> dense -> relu -> dropout -> dense(K) -> softmax).
"""
from __future__ import annotations

from dataclasses import asdict, dataclass, field, replace

import numpy as np

from . import tensor as T
from .blocks import DenseBlock, ResidualBlock, Transition, VGGStack
from .nn import BatchNorm2d, Conv2d, Dense, Dropout, GlobalAvgPool, MaxPool2d, Module, ReLU, Sequential
from .tensor import Tensor

FAMILIES = ("vgg", "resnet_v2", "se_resnet", "resnext", "densenet")


@dataclass(frozen=True)
class StageConfig:
    depth: int
    channels: int = 16

    @classmethod
    def coerce(cls, value) -> "StageConfig":
        if isinstance(value, StageConfig):
            return value
        if isinstance(value, dict):
            return cls(**value)
        return cls(*value)


@dataclass(frozen=True)
class ArchitectureConfig:
    """Network description.

    ``StageConfig.depth`` means convs per stack for vgg, residual blocks for the
    resnet families, and the dense-block layer count ``n`` (input included) for
    densenet.
    """
    family: str
    stages: tuple[StageConfig, ...]
    input_shape: tuple[int, int, int] = (3, 32, 32)
    num_classes: int = 4
    stem_channels: int = 16
    stem_kernel: int = 3
    stem_stride: int = 1
    stem_pool: bool = False
    vgg_padding: str | int = "same"
    growth_rate: int = 12
    dense_bottleneck: int | None = None
    compression: float = 1.0
    transition: str = "conv"
    cardinality: int = 4
    bottleneck_ratio: float | None = None
    se_ratio: int = 16
    head_width: int = 64
    dropout: float = 0.1
    name: str = ""

    def __post_init__(self):
        object.__setattr__(self, "stages", tuple(StageConfig.coerce(s) for s in self.stages))
        object.__setattr__(self, "input_shape", tuple(int(v) for v in self.input_shape))
        if self.family not in FAMILIES:
            raise ValueError(f"unknown architecture family {self.family!r}; expected one of {FAMILIES}")
        if self.num_classes < 2:
            raise ValueError(f"num_classes must be >= 2, got {self.num_classes}")
        if not self.stages:
            raise ValueError("architecture needs at least one stage")
        if len(self.input_shape) != 3:
            raise ValueError(f"input_shape must be (C, H, W), got {self.input_shape}")

    def to_dict(self) -> dict:
        d = asdict(self)
        d["stages"] = [asdict(s) for s in self.stages]
        d["input_shape"] = list(self.input_shape)
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "ArchitectureConfig":
        d = dict(d)
        d["stages"] = tuple(StageConfig.coerce(s) for s in d["stages"])
        return cls(**d)

    def with_(self, **changes) -> "ArchitectureConfig":
        return replace(self, **changes)


class Model(Module):
    """A built network: ordered top-level layers plus the config that made them."""

    def __init__(self, config: ArchitectureConfig, layers: list[tuple[str, Module]],
                 shape_trace: list[tuple[str, tuple[int, ...]]]):
        self.config = config
        self.layer_names = [name for name, _ in layers]
        for name, layer in layers:
            setattr(self, name, layer)
        self.shape_trace = shape_trace

    def layer(self, name: str) -> Module:
        if name not in self.layer_names:
            raise KeyError(f"no layer named {name!r}; layers are {self.layer_names}")
        return getattr(self, name)

    def logits(self, x: Tensor) -> Tensor:
        if not isinstance(x, Tensor):
            x = Tensor(x)
        if tuple(x.shape[1:]) != self.config.input_shape:
            raise ValueError(f"batch shape {x.shape[1:]} does not match model input {self.config.input_shape}")
        for name in self.layer_names:
            x = getattr(self, name)(x)
        return x

    def forward(self, x: Tensor) -> Tensor:
        return T.softmax(self.logits(x), axis=1)

    def dropout_layers(self) -> list[Dropout]:
        return [m for m in self.modules() if isinstance(m, Dropout)]


def model_forward(model: Model, batch) -> Tensor:
    return model(batch)


def count_parameters(model: Module) -> int:
    return int(sum(p.size for p in model.parameters()))


def _residual_kind(cfg: ArchitectureConfig) -> tuple[str, int]:
    if cfg.family == "resnext":
        return "grouped", cfg.cardinality
    return ("grouped", 1) if cfg.bottleneck_ratio else ("basic", 1)


def build_model(config: ArchitectureConfig, seed: int = 0) -> Model:
    """Instantiate every parameter for ``config`` deterministically from ``seed``."""
    rng = np.random.default_rng(seed)
    cfg = config
    layers: list[tuple[str, Module]] = []
    trace: list[tuple[str, tuple[int, ...]]] = [("input", cfg.input_shape)]
    shape = cfg.input_shape

    def push(name: str, module: Module):
        nonlocal shape
        try:
            if isinstance(module, VGGStack):
                for i, s in enumerate(module.shape_trace(shape)):
                    trace.append((f"{name}.conv{i}", s))
            shape = module.output_shape(shape)
        except ValueError as err:
            raise ValueError(f"invalid shape chain at {name}: {err}") from None
        layers.append((name, module))
        trace.append((name, shape))

    in_ch = cfg.input_shape[0]
    if cfg.family != "vgg":
        stem: list[Module] = [Conv2d(in_ch, cfg.stem_channels, cfg.stem_kernel, cfg.stem_stride,
                                     "same", rng=rng)]
        if cfg.stem_pool:
            stem.append(MaxPool2d(3, 2))
        push("stem", Sequential(*stem))
        in_ch = cfg.stem_channels

    for i, st in enumerate(cfg.stages):
        if cfg.family == "vgg":
            push(f"stage{i}", VGGStack(in_ch, st.channels, st.depth, cfg.vgg_padding, rng=rng))
            in_ch = st.channels
            if shape[1] >= 2 and shape[2] >= 2:
                push(f"pool{i}", MaxPool2d(2, 2))
        elif cfg.family == "densenet":
            block = DenseBlock(in_ch, st.depth, cfg.growth_rate, cfg.dense_bottleneck, rng=rng)
            push(f"stage{i}", block)
            in_ch = block.out_channels
            if i < len(cfg.stages) - 1:
                out_ch = max(1, int(in_ch * cfg.compression))
                push(f"transition{i}", Transition(in_ch, out_ch, cfg.transition, rng=rng))
                in_ch = out_ch
        else:
            kind, groups = _residual_kind(cfg)
            se = cfg.se_ratio if cfg.family == "se_resnet" else None
            width = None
            if kind == "grouped":
                ratio = cfg.bottleneck_ratio or 0.5
                width = max(groups, int(st.channels * ratio) // groups * groups)
            blocks = []
            for b in range(st.depth):
                stride = 2 if (b == 0 and i > 0) else 1
                blocks.append(ResidualBlock(in_ch, st.channels, stride, kind, groups, width, se, rng=rng))
                in_ch = st.channels
            push(f"stage{i}", Sequential(*blocks))

    if cfg.family != "vgg":
        push("head_norm", Sequential(BatchNorm2d(in_ch), ReLU()))
    push("pool", GlobalAvgPool())
    push("head_dense", Sequential(Dense(in_ch, cfg.head_width, rng=rng), ReLU()))
    push("head_dropout", Dropout(cfg.dropout, seed=seed))
    push("classifier", Dense(cfg.head_width, cfg.num_classes, rng=rng))
    return Model(cfg, layers, trace)


# -- preset configurations ---------------------------------------------------

def mini_config(family: str, input_shape=(3, 32, 32), num_classes: int = 4, **overrides) -> ArchitectureConfig:
    """Desk-scale preset for each family (well under 200k parameters)."""
    presets = {
        "vgg": dict(stages=[(1, 8), (1, 16), (2, 32)], head_width=32),
        "resnet_v2": dict(stages=[(1, 16), (1, 32)], stem_channels=16, stem_stride=2, head_width=32),
        "se_resnet": dict(stages=[(1, 16), (1, 32)], stem_channels=16, stem_stride=2, se_ratio=4,
                          head_width=32),
        "resnext": dict(stages=[(1, 16), (1, 32)], stem_channels=16, stem_stride=2, cardinality=4,
                        bottleneck_ratio=1.0, head_width=32),
        "densenet": dict(stages=[(3, 0), (3, 0)], stem_channels=16, stem_stride=2, growth_rate=8,
                         head_width=32),
    }
    if family not in presets:
        raise ValueError(f"unknown family {family!r}")
    kw = dict(presets[family], family=family, input_shape=tuple(input_shape),
              num_classes=num_classes, name=f"{family}-mini")
    kw.update(overrides)
    return ArchitectureConfig(**kw)


def full_profile(name: str, num_classes: int = 4) -> ArchitectureConfig:
    """Standard-depth layouts at 224x224.  Parameter counts are informational."""
    common = dict(input_shape=(3, 224, 224), num_classes=num_classes, head_width=128, name=name)
    if name == "vgg19":
        return ArchitectureConfig(family="vgg", stages=[(2, 64), (2, 128), (4, 256), (4, 512), (4, 512)],
                                  **common)
    residual = dict(stem_channels=64, stem_kernel=7, stem_stride=2, stem_pool=True)
    if name == "resnet152v2":
        return ArchitectureConfig(family="resnet_v2", stages=[(3, 256), (8, 512), (36, 1024), (3, 2048)],
                                  bottleneck_ratio=0.25, **residual, **common)
    if name == "seresnet152":
        return ArchitectureConfig(family="se_resnet", stages=[(3, 256), (8, 512), (36, 1024), (3, 2048)],
                                  bottleneck_ratio=0.25, se_ratio=16, **residual, **common)
    if name == "resnext101":
        return ArchitectureConfig(family="resnext", stages=[(3, 256), (4, 512), (23, 1024), (3, 2048)],
                                  cardinality=32, bottleneck_ratio=0.5, **residual, **common)
    dense = dict(stem_kernel=7, stem_stride=2, stem_pool=True, compression=0.5, transition="avg")
    # block sizes count internal layers; the dense-block n includes the input
    if name == "densenet201":
        return ArchitectureConfig(family="densenet", stages=[(L + 1, 0) for L in (6, 12, 48, 32)],
                                  stem_channels=64, growth_rate=32, dense_bottleneck=128, **dense, **common)
    if name == "densenet161":
        return ArchitectureConfig(family="densenet", stages=[(L + 1, 0) for L in (6, 12, 36, 24)],
                                  stem_channels=96, growth_rate=48, dense_bottleneck=192, **dense, **common)
    raise ValueError(f"unknown full profile {name!r}")


def feature_width(config: ArchitectureConfig) -> int:
    """Channel count entering the head (after the last stage), without building weights."""
    c = config.input_shape[0] if config.family == "vgg" else config.stem_channels
    for i, st in enumerate(config.stages):
        if config.family == "densenet":
            c = c + (st.depth - 1) * config.growth_rate
            if i < len(config.stages) - 1:
                c = max(1, int(c * config.compression))
        else:
            c = st.channels
    return c
