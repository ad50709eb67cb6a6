"""Pixel-level transforms: normalization, bilinear resize and preprocessing filters.

Images are ``H x W x 3`` arrays.  8-bit inputs come back as 8-bit (rounded
and clipped to [0, 255]); float inputs stay float.
"""
from __future__ import annotations

import numpy as np
from scipy import ndimage

FILTERS = ("gaussian", "median", "linear_contrast", "contrast_enhance")


def normalize_image(img: np.ndarray) -> np.ndarray:
    """8-bit ``H x W x C`` -> float32 ``C x H x W`` in [0, 1] (exact quotient by 255)."""
    img = np.asarray(img)
    if img.dtype != np.uint8:
        raise TypeError(f"normalize_image expects 8-bit pixels, got {img.dtype}")
    return (img.astype(np.float32) / np.float32(255.0)).transpose(2, 0, 1).copy()


def normalize_batch(images) -> np.ndarray:
    return np.stack([normalize_image(im) for im in images]) if len(images) else \
        np.zeros((0, 3, 0, 0), np.float32)


def _like(out: np.ndarray, ref: np.ndarray) -> np.ndarray:
    if ref.dtype == np.uint8:
        return np.clip(np.rint(out), 0, 255).astype(np.uint8)
    return out.astype(ref.dtype, copy=False)


def _axis_weights(n_in: int, n_out: int):
    # half-pixel centres: src = (dst + 0.5) * n_in / n_out - 0.5, clamped at the borders
    src = (np.arange(n_out) + 0.5) * (n_in / n_out) - 0.5
    src = np.clip(src, 0, n_in - 1)
    lo = np.floor(src).astype(np.int64)
    hi = np.minimum(lo + 1, n_in - 1)
    return lo, hi, src - lo


def resize_image(img: np.ndarray, size) -> np.ndarray:
    """Plain bilinear resize to ``size = (H, W)`` (or an int for square); aspect not kept."""
    h_out, w_out = (size, size) if isinstance(size, int) else size
    if h_out < 1 or w_out < 1:
        raise ValueError(f"target size must be at least 1x1, got {h_out}x{w_out}")
    img = np.asarray(img)
    squeeze = img.ndim == 2
    x = img[..., None] if squeeze else img
    h, w = x.shape[:2]
    if (h, w) == (h_out, w_out):
        return img.copy()
    x = x.astype(np.float64)
    y0, y1, fy = _axis_weights(h, h_out)
    x0, x1, fx = _axis_weights(w, w_out)
    rows = x[y0] * (1 - fy)[:, None, None] + x[y1] * fy[:, None, None]
    out = rows[:, x0] * (1 - fx)[None, :, None] + rows[:, x1] * fx[None, :, None]
    out = out[..., 0] if squeeze else out
    return _like(out, img)


def _per_channel(img: np.ndarray, fn) -> np.ndarray:
    x = np.asarray(img, dtype=np.float64)
    if x.ndim == 2:
        return fn(x)
    return np.stack([fn(x[..., c]) for c in range(x.shape[-1])], axis=-1)


def gaussian(img: np.ndarray, sigma: float) -> np.ndarray:
    if not sigma > 0:
        raise ValueError(f"gaussian sigma must be > 0, got {sigma}")
    return _like(_per_channel(img, lambda ch: ndimage.gaussian_filter(ch, sigma, mode="reflect")), img)


def median(img: np.ndarray, k: int = 3) -> np.ndarray:
    if int(k) != k or k < 3 or k % 2 == 0:
        raise ValueError(f"median window must be an odd integer >= 3, got {k}")
    return _like(_per_channel(img, lambda ch: ndimage.median_filter(ch, size=int(k), mode="reflect")), img)


def linear_contrast(img: np.ndarray, alpha: float) -> np.ndarray:
    """``v -> clamp(128 + alpha (v - 128))``."""
    if not alpha > 0:
        raise ValueError(f"linear_contrast alpha must be > 0, got {alpha}")
    x = np.asarray(img, dtype=np.float64)
    return _like(np.clip(128.0 + alpha * (x - 128.0), 0, 255), img)


def _equalize(ch: np.ndarray) -> np.ndarray:
    v = np.clip(np.rint(ch), 0, 255).astype(np.int64)
    hist = np.bincount(v.ravel(), minlength=256)
    cdf = np.cumsum(hist)
    nz = cdf[hist > 0]
    cdf_min = nz[0]
    if cdf[-1] == cdf_min:  # a single grey level: nothing to spread
        return ch
    lut = np.round((cdf - cdf_min) / (cdf[-1] - cdf_min) * 255.0)
    return lut[v]


def contrast_enhance(img: np.ndarray) -> np.ndarray:
    """Per-channel histogram equalization."""
    return _like(_per_channel(img, _equalize), img)


def preprocess_filter(img: np.ndarray, name: str, **params) -> np.ndarray:
    """Dispatch by name: ``gaussian(sigma)``, ``median(k)``, ``linear_contrast(alpha)``, ``contrast_enhance``."""
    if name == "gaussian":
        return gaussian(img, params.get("sigma", 1.0))
    if name == "median":
        return median(img, params.get("k", 3))
    if name == "linear_contrast":
        return linear_contrast(img, params.get("alpha", 1.0))
    if name == "contrast_enhance":
        return contrast_enhance(img)
    raise ValueError(f"unknown filter {name!r}; expected one of {FILTERS}")
