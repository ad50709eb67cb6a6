"""Seeded synthetic 4-class image sets for desk-scale runs and tests.

Each class is a stripe texture with its own orientation (horizontal,
vertical, diagonal, anti-diagonal) under random phase, period, tint and
pixel noise.
"""
from __future__ import annotations

from pathlib import Path

import numpy as np
from PIL import Image

CLASS_NAMES = ("benign", "early_pre_b", "pre_b", "pro_b")


def stripe_image(cls: int, size: int, rng: np.random.Generator) -> np.ndarray:
    yy, xx = np.mgrid[0:size, 0:size].astype(np.float64)
    coord = (yy, xx, (xx + yy) / np.sqrt(2), (xx - yy) / np.sqrt(2))[cls % 4]
    period = rng.uniform(5.0, 8.0)
    phase = rng.uniform(0, 2 * np.pi)
    wave = 0.5 + 0.5 * np.sin(2 * np.pi * coord / period + phase)
    tint = rng.uniform(0.6, 1.0, size=3)
    base = rng.uniform(0.0, 0.25, size=3)
    img = base + wave[..., None] * tint * 0.75
    img += rng.normal(0, 0.05, img.shape)
    return np.clip(np.round(img * 255), 0, 255).astype(np.uint8)


def make_images(n_per_class: int, size: int = 32, n_classes: int = 4,
                seed: int = 0) -> tuple[np.ndarray, np.ndarray]:
    """Return ``(images [N,H,W,3] uint8, labels [N])`` in class-major order."""
    rng = np.random.default_rng(seed)
    imgs, labels = [], []
    for c in range(n_classes):
        for _ in range(n_per_class):
            imgs.append(stripe_image(c, size, rng))
            labels.append(c)
    return np.stack(imgs), np.asarray(labels, dtype=np.int64)


def make_tensors(n_per_class: int, size: int = 32, n_classes: int = 4,
                 seed: int = 0) -> tuple[np.ndarray, np.ndarray]:
    """Normalized [N,3,H,W] float32 images and labels."""
    imgs, labels = make_images(n_per_class, size, n_classes, seed)
    return (imgs.transpose(0, 3, 1, 2).astype(np.float32) / np.float32(255.0)), labels


def write_dataset(root, n_per_class, size: int = 32, seed: int = 0,
                  class_names=CLASS_NAMES) -> Path:
    """Write a class-folder PNG dataset. ``n_per_class`` may be an int or one count per class."""
    root = Path(root)
    counts = [n_per_class] * len(class_names) if isinstance(n_per_class, int) else list(n_per_class)
    rng = np.random.default_rng(seed)
    for c, (name, count) in enumerate(zip(class_names, counts)):
        d = root / name
        d.mkdir(parents=True, exist_ok=True)
        for i in range(count):
            Image.fromarray(stripe_image(c, size, rng)).save(d / f"{name}_{i:04d}.png")
    return root
