"""Class-folder ingestion and per-class train/validation/test splitting."""
from __future__ import annotations

import logging
import warnings
from dataclasses import dataclass, field
from fractions import Fraction
from pathlib import Path
from typing import Sequence

import numpy as np
from PIL import Image, UnidentifiedImageError

log = logging.getLogger(__name__)

IMAGE_SUFFIXES = (".png", ".jpg", ".jpeg")
SPLITS = ("train", "validation", "test")


class DatasetWarning(UserWarning):
    pass


@dataclass
class LabeledImage:
    pixels: np.ndarray
    label: int
    origin: str
    lineage: dict = field(default_factory=lambda: {"kind": "original"})


@dataclass
class Dataset:
    class_names: list[str]
    images: list[LabeledImage]
    splits: list[str] | None = None
    root: str | None = None

    @property
    def k(self) -> int:
        return len(self.class_names)

    def counts(self) -> dict[str, int]:
        c = {name: 0 for name in self.class_names}
        for img in self.images:
            c[self.class_names[img.label]] += 1
        return c

    def split_counts(self) -> dict[str, dict[str, int]]:
        if self.splits is None:
            raise ValueError("dataset has no split assignment")
        out = {name: {s: 0 for s in SPLITS} for name in self.class_names}
        for img, s in zip(self.images, self.splits):
            out[self.class_names[img.label]][s] += 1
        return out

    def subset(self, split: str) -> list[LabeledImage]:
        if self.splits is None:
            raise ValueError("dataset has no split assignment")
        return [img for img, s in zip(self.images, self.splits) if s == split]


def list_class_dirs(root) -> list[Path]:
    root = Path(root)
    if not root.is_dir():
        raise FileNotFoundError(f"dataset root {root} is not a directory")
    return sorted((p for p in root.iterdir() if p.is_dir()), key=lambda p: p.name)


def ingest_dataset(root, load_pixels: bool = True) -> Dataset:
    """Read ``root/<class>/*.png|jpg|jpeg``; class names sorted lexicographically.

    Undecodable files are skipped with a :class:`DatasetWarning`; empty class
    folders warn too.  Fewer than two classes is an error.
    """
    root = Path(root)
    class_dirs = list_class_dirs(root)
    if not class_dirs:
        raise ValueError(f"no class directories under {root}")
    if len(class_dirs) < 2:
        raise ValueError(f"need at least 2 classes, found {len(class_dirs)} under {root}")
    names = [d.name for d in class_dirs]
    images: list[LabeledImage] = []
    for label, d in enumerate(class_dirs):
        files = sorted(p for p in d.iterdir() if p.suffix.lower() in IMAGE_SUFFIXES)
        kept = 0
        for f in files:
            try:
                with Image.open(f) as im:
                    pixels = np.asarray(im.convert("RGB"), dtype=np.uint8) if load_pixels else \
                        (im.verify() or np.zeros((0, 0, 3), np.uint8))
            except (UnidentifiedImageError, OSError, SyntaxError) as err:
                warnings.warn(f"skipping undecodable image {f}: {err}", DatasetWarning, stacklevel=2)
                continue
            images.append(LabeledImage(pixels, label, f.relative_to(root).as_posix()))
            kept += 1
        if kept == 0:
            warnings.warn(f"class folder {d} contains no images", DatasetWarning, stacklevel=2)
        log.info("class %s: %d images", d.name, kept)
    return Dataset(names, images, root=str(root))


def split_counts_for(n: int, ratios: Sequence[float] = (0.7, 0.2, 0.1)) -> tuple[int, int, int]:
    """``floor(r_train*n)``, ``floor(r_val*n)``, remainder; exact rational arithmetic."""
    fr = [Fraction(str(r)) for r in ratios]
    n_train = int(fr[0] * n)
    n_val = int(fr[1] * n)
    return n_train, n_val, n - n_train - n_val


def split_dataset(dataset: Dataset, ratios: Sequence[float] = (0.7, 0.2, 0.1), seed: int = 0) -> Dataset:
    """Assign splits per class after a seeded shuffle; returns the same dataset."""
    if len(ratios) != 3 or any(r <= 0 for r in ratios):
        raise ValueError(f"ratios must be three positive numbers, got {ratios}")
    if sum(Fraction(str(r)) for r in ratios) != 1:
        raise ValueError(f"ratios must sum to 1, got {ratios}")
    splits = [""] * len(dataset.images)
    for label, name in enumerate(dataset.class_names):
        idx = [i for i, img in enumerate(dataset.images) if img.label == label]
        idx.sort(key=lambda i: dataset.images[i].origin)
        order = np.random.default_rng([seed, label]).permutation(len(idx))
        idx = [idx[j] for j in order]
        n = len(idx)
        if n < len(SPLITS):
            if n:
                warnings.warn(f"class {name} has {n} images; all assigned to train", DatasetWarning,
                              stacklevel=2)
            for i in idx:
                splits[i] = "train"
            continue
        n_tr, n_va, _ = split_counts_for(n, ratios)
        for j, i in enumerate(idx):
            splits[i] = "train" if j < n_tr else "validation" if j < n_tr + n_va else "test"
    dataset.splits = splits
    return dataset
