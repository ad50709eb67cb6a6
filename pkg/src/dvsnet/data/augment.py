"""Seeded augmentation: each variant applies a random non-empty subset of a transform menu.

Every variant records the exact parameters it drew, so ``apply_transforms``
replays it from the lineage alone.  Geometric warps fill exposed borders by
reflection.
"""
from __future__ import annotations

import json
import zlib
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np
from PIL import Image
from scipy import ndimage

from .dataset import Dataset, LabeledImage

TRANSFORMS = ("rotation", "rot90", "distortion", "shear", "vflip", "hflip", "skew", "intensity")


@dataclass(frozen=True)
class AugmentPlan:
    variants: int = 10
    seed: int = 0
    menu: tuple[str, ...] = TRANSFORMS
    max_rotation: float = 15.0
    max_shear: float = 0.2
    max_skew: float = 0.15
    distortion_px: float = 3.0
    distortion_grid: int = 3

    def __post_init__(self):
        if self.variants < 0:
            raise ValueError(f"variants must be >= 0, got {self.variants}")
        if not self.menu:
            raise ValueError("augmentation menu is empty")
        bad = [t for t in self.menu if t not in TRANSFORMS]
        if bad:
            raise ValueError(f"unknown transforms {bad}; expected a subset of {TRANSFORMS}")

    def to_dict(self) -> dict:
        d = dict(self.__dict__)
        d["menu"] = list(self.menu)
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "AugmentPlan":
        d = dict(d)
        if "menu" in d:
            d["menu"] = tuple(d["menu"])
        return cls(**d)


# -- geometric helpers --------------------------------------------------------

def _warp(img: np.ndarray, coords_fn) -> np.ndarray:
    """Resample ``img`` at source coordinates ``coords_fn(yy, xx) -> (sy, sx)``; reflected borders."""
    h, w = img.shape[:2]
    yy, xx = np.mgrid[0:h, 0:w].astype(np.float64)
    sy, sx = coords_fn(yy, xx)
    x = img.astype(np.float64)
    chans = [ndimage.map_coordinates(x[..., c], [sy, sx], order=1, mode="mirror")
             for c in range(x.shape[-1])]
    out = np.stack(chans, axis=-1)
    if img.dtype == np.uint8:
        return np.clip(np.rint(out), 0, 255).astype(np.uint8)
    return out.astype(img.dtype)


def _affine(img: np.ndarray, m: np.ndarray) -> np.ndarray:
    """Output pixel ``o`` samples input at ``m @ (o - c) + c`` (``c`` = image centre)."""
    h, w = img.shape[:2]
    cy, cx = (h - 1) / 2, (w - 1) / 2

    def coords(yy, xx):
        dy, dx = yy - cy, xx - cx
        return m[0, 0] * dy + m[0, 1] * dx + cy, m[1, 0] * dy + m[1, 1] * dx + cx
    return _warp(img, coords)


def rotate(img: np.ndarray, degrees: float) -> np.ndarray:
    t = np.deg2rad(degrees)
    c, s = np.cos(t), np.sin(t)
    return _affine(img, np.array([[c, -s], [s, c]]))


def shear(img: np.ndarray, amount: float, axis: int = 1) -> np.ndarray:
    m = np.array([[1.0, 0.0], [amount, 1.0]]) if axis == 1 else np.array([[1.0, amount], [0.0, 1.0]])
    return _affine(img, m)


def _homography(src: np.ndarray, dst: np.ndarray) -> np.ndarray:
    """3x3 H with ``H @ [x, y, 1] ~ dst`` for four point pairs (DLT)."""
    a = []
    for (x, y), (u, v) in zip(src, dst):
        a.append([x, y, 1, 0, 0, 0, -u * x, -u * y, -u])
        a.append([0, 0, 0, x, y, 1, -v * x, -v * y, -v])
    _, _, vt = np.linalg.svd(np.asarray(a))
    return vt[-1].reshape(3, 3) / vt[-1, -1]


def skew(img: np.ndarray, side: str, amount: float) -> np.ndarray:
    """Perspective skew: one side of the image is pulled inward by ``amount`` of its length."""
    h, w = img.shape[:2]
    corners = np.array([[0, 0], [w - 1, 0], [w - 1, h - 1], [0, h - 1]], dtype=np.float64)  # (x, y)
    moved = corners.copy()
    dx, dy = amount * (w - 1), amount * (h - 1)
    if side == "left":
        moved[0, 1] += dy; moved[3, 1] -= dy
    elif side == "right":
        moved[1, 1] += dy; moved[2, 1] -= dy
    elif side == "top":
        moved[0, 0] += dx; moved[1, 0] -= dx
    elif side == "bottom":
        moved[3, 0] += dx; moved[2, 0] -= dx
    else:
        raise ValueError(f"unknown skew side {side!r}")
    hmat = _homography(moved, corners)  # output -> source

    def coords(yy, xx):
        den = hmat[2, 0] * xx + hmat[2, 1] * yy + hmat[2, 2]
        sx = (hmat[0, 0] * xx + hmat[0, 1] * yy + hmat[0, 2]) / den
        sy = (hmat[1, 0] * xx + hmat[1, 1] * yy + hmat[1, 2]) / den
        return sy, sx
    return _warp(img, coords)


def distort(img: np.ndarray, grid_dy: np.ndarray, grid_dx: np.ndarray) -> np.ndarray:
    """Smooth elastic warp: a coarse displacement grid bilinearly upsampled to full size."""
    h, w = img.shape[:2]
    gy, gx = np.asarray(grid_dy, dtype=np.float64), np.asarray(grid_dx, dtype=np.float64)
    g = gy.shape[0]
    yy, xx = np.mgrid[0:h, 0:w].astype(np.float64)
    py = yy * (g - 1) / max(h - 1, 1)
    px = xx * (g - 1) / max(w - 1, 1)
    dy = ndimage.map_coordinates(gy, [py, px], order=1)
    dx = ndimage.map_coordinates(gx, [py, px], order=1)
    return _warp(img, lambda a, b: (a + dy, b + dx))


def intensity(img: np.ndarray, gain: float, bias: float) -> np.ndarray:
    out = img.astype(np.float64) * gain + bias
    if img.dtype == np.uint8:
        return np.clip(np.rint(out), 0, 255).astype(np.uint8)
    return out.astype(img.dtype)


def hflip(img: np.ndarray) -> np.ndarray:
    return img[:, ::-1].copy()


def vflip(img: np.ndarray) -> np.ndarray:
    return img[::-1].copy()


def rot90(img: np.ndarray, k: int) -> np.ndarray:
    if k % 2 and img.shape[0] != img.shape[1]:
        raise ValueError("odd quarter turns change the shape of a non-square image")
    return np.rot90(img, k, axes=(0, 1)).copy()


# -- parameter sampling and replay -----------------------------------------------

def _sample(op: str, plan: AugmentPlan, rng: np.random.Generator, shape) -> dict:
    h, w = shape[:2]
    if op == "rotation":
        return {"op": op, "degrees": float(rng.uniform(-plan.max_rotation, plan.max_rotation))}
    if op == "rot90":
        k = int(rng.integers(1, 4)) if h == w else 2
        return {"op": op, "k": k}
    if op == "distortion":
        g = plan.distortion_grid
        amp = plan.distortion_px * min(h, w) / 32.0
        return {"op": op, "grid_dy": rng.uniform(-amp, amp, (g, g)).round(6).tolist(),
                "grid_dx": rng.uniform(-amp, amp, (g, g)).round(6).tolist()}
    if op == "shear":
        return {"op": op, "amount": float(rng.uniform(-plan.max_shear, plan.max_shear)),
                "axis": int(rng.integers(0, 2))}
    if op in ("vflip", "hflip"):
        return {"op": op}
    if op == "skew":
        return {"op": op, "side": str(rng.choice(["left", "right", "top", "bottom"])),
                "amount": float(rng.uniform(0, plan.max_skew))}
    if op == "intensity":
        return {"op": op, "gain": float(rng.uniform(0.8, 1.2)), "bias": float(rng.uniform(-20, 20))}
    raise ValueError(f"unknown transform {op!r}")


def apply_transform(img: np.ndarray, t: dict) -> np.ndarray:
    op = t["op"]
    if op == "rotation":
        return rotate(img, t["degrees"])
    if op == "rot90":
        return rot90(img, t["k"])
    if op == "distortion":
        return distort(img, t["grid_dy"], t["grid_dx"])
    if op == "shear":
        return shear(img, t["amount"], t.get("axis", 1))
    if op == "vflip":
        return vflip(img)
    if op == "hflip":
        return hflip(img)
    if op == "skew":
        return skew(img, t["side"], t["amount"])
    if op == "intensity":
        return intensity(img, t["gain"], t["bias"])
    raise ValueError(f"unknown transform {op!r}")


def apply_transforms(img: np.ndarray, transforms: Iterable[dict]) -> np.ndarray:
    for t in transforms:
        img = apply_transform(img, t)
    return img


def variant_rng(plan: AugmentPlan, origin: str, variant: int) -> np.random.Generator:
    return np.random.default_rng([plan.seed, variant, zlib.crc32(origin.encode("utf-8"))])


def augment_image(image: LabeledImage, plan: AugmentPlan) -> list[LabeledImage]:
    """Exactly ``plan.variants`` augmented copies; same size and label as the source."""
    out = []
    for v in range(plan.variants):
        rng = variant_rng(plan, image.origin, v)
        n_ops = int(rng.integers(1, len(plan.menu) + 1))
        chosen = set(rng.choice(len(plan.menu), size=n_ops, replace=False).tolist())
        ops = [plan.menu[i] for i in sorted(chosen)]
        params = [_sample(op, plan, rng, image.pixels.shape) for op in ops]
        pixels = apply_transforms(image.pixels, params)
        lineage = {"kind": "augmented", "source": image.origin, "variant": v,
                   "seed": plan.seed, "transforms": params}
        out.append(LabeledImage(pixels, image.label, f"{image.origin}#aug{v:02d}", lineage))
    return out


def augment_images(images: Sequence[LabeledImage], plan: AugmentPlan,
                   include_originals: bool = True) -> list[LabeledImage]:
    """Originals plus their variants, in order of (source path, variant index)."""
    out = []
    for img in sorted(images, key=lambda im: im.origin):
        if include_originals:
            out.append(img)
        out.extend(augment_image(img, plan))
    return out


def augment_training_split(dataset: Dataset, plan: AugmentPlan) -> list[LabeledImage]:
    """Augment the training split only; validation and test stay untouched."""
    return augment_images(dataset.subset("train"), plan)


def materialize(augmented: Sequence[LabeledImage], out_dir, class_names: Sequence[str]) -> list[Path]:
    """Write ``out/<class>/<stem>__augNN.png`` with a ``.json`` lineage sidecar each."""
    out_dir = Path(out_dir)
    written = []
    for img in augmented:
        if img.lineage.get("kind") != "augmented":
            continue
        stem = Path(img.lineage["source"]).stem
        d = out_dir / class_names[img.label]
        d.mkdir(parents=True, exist_ok=True)
        base = d / f"{stem}__aug{img.lineage['variant']:02d}"
        Image.fromarray(np.asarray(img.pixels, dtype=np.uint8)).save(base.with_suffix(".png"))
        base.with_suffix(".json").write_text(json.dumps(img.lineage, indent=2, sort_keys=True) + "\n")
        written.append(base.with_suffix(".png"))
    return written
