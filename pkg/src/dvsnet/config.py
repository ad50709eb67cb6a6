"""Run configuration: one YAML document per run, overridable from the command line.

Schema (all keys optional)::

    dataset: path/to/class/folders      # or an ingest output directory
    out: runs/densenet
    seed: 0
    image_size: 32
    ratios: [0.7, 0.2, 0.1]
    architecture: densenet-mini          # "<family>-mini", a full profile name, or a mapping
    training: {epochs: 60, batch_size: 16, learning_rate: 1.0e-4, optimizer: adam, patience: 10}
    augment: {variants: 10}             # training split only; 0 disables
"""
from __future__ import annotations

import hashlib
import json
from dataclasses import asdict, dataclass, field, fields, replace
from pathlib import Path

import yaml

from .architectures import FAMILIES, ArchitectureConfig, full_profile, mini_config
from .data.augment import AugmentPlan
from .training import TrainingConfig

FULL_PROFILES = ("vgg19", "resnet152v2", "seresnet152", "resnext101", "densenet201", "densenet161")
MINI_ALIASES = {"vgg-mini": "vgg", "resnet-mini": "resnet_v2", "resnet_v2-mini": "resnet_v2",
                "se-resnet-mini": "se_resnet", "se_resnet-mini": "se_resnet",
                "resnext-mini": "resnext", "densenet-mini": "densenet"}


@dataclass
class RunConfig:
    dataset: str | None = None
    out: str = "."
    seed: int = 0
    image_size: int = 32
    ratios: tuple[float, float, float] = (0.7, 0.2, 0.1)
    architecture: str | dict = "densenet-mini"
    training: TrainingConfig = field(default_factory=TrainingConfig)
    augment: AugmentPlan = field(default_factory=AugmentPlan)

    def __post_init__(self):
        if isinstance(self.training, dict):
            self.training = TrainingConfig.from_dict(self.training)
        if isinstance(self.augment, dict):
            self.augment = AugmentPlan.from_dict(self.augment)
        self.ratios = tuple(float(r) for r in self.ratios)
        if self.image_size < 1:
            raise ValueError(f"image_size must be >= 1, got {self.image_size}")

    def to_dict(self) -> dict:
        d = {f.name: getattr(self, f.name) for f in fields(self)}
        d["training"] = self.training.to_dict()
        d["augment"] = self.augment.to_dict()
        d["ratios"] = list(self.ratios)
        return d

    def with_seed(self, seed: int) -> "RunConfig":
        return replace(self, seed=seed, training=replace(self.training, seed=seed),
                       augment=replace(self.augment, seed=seed))


def load_config(path) -> RunConfig:
    data = yaml.safe_load(Path(path).read_text()) or {}
    if not isinstance(data, dict):
        raise ValueError(f"{path}: config must be a mapping")
    known = {f.name for f in fields(RunConfig)}
    unknown = sorted(set(data) - known)
    if unknown:
        raise ValueError(f"{path}: unknown config keys {unknown}")
    return RunConfig(**data)


def config_digest(d: dict) -> str:
    text = json.dumps(d, sort_keys=True, separators=(",", ":"), default=str)
    return hashlib.sha256(text.encode("utf-8")).hexdigest()[:16]


def resolve_architecture(spec, image_size: int, num_classes: int) -> ArchitectureConfig:
    shape = (3, image_size, image_size)
    if isinstance(spec, dict):
        d = dict(spec)
        d.setdefault("input_shape", shape)
        d.setdefault("num_classes", num_classes)
        return ArchitectureConfig.from_dict(d)
    if spec in MINI_ALIASES:
        return mini_config(MINI_ALIASES[spec], shape, num_classes)
    if spec in FAMILIES:
        return mini_config(spec, shape, num_classes)
    if spec in FULL_PROFILES:
        return full_profile(spec, num_classes).with_(input_shape=shape)
    raise ValueError(f"unknown architecture {spec!r}; use one of {sorted(MINI_ALIASES)} "
                     f"or {list(FULL_PROFILES)}")
