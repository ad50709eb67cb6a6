"""Convolution and pooling primitives over [N, C, H, W] tensors.

Convolution lowers each sliding window to a row of a matrix (im2col) and
multiplies by the flattened kernel.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from .tensor import Tensor, _make


@dataclass(frozen=True)
class ConvSpec:
    input_extent: int
    kernel_extent: int
    stride: int = 1
    padding: int = 0

    def validate(self) -> None:
        if self.kernel_extent < 1 or self.stride < 1 or self.input_extent < 1:
            raise ValueError(f"extents and stride must be >= 1: {self}")
        if self.padding < 0:
            raise ValueError(f"padding must be non-negative: {self}")
        if self.input_extent + 2 * self.padding < self.kernel_extent:
            raise ValueError(
                f"kernel {self.kernel_extent} exceeds padded input "
                f"{self.input_extent} + 2*{self.padding}")


def conv_output_size(spec: ConvSpec | int, kernel: int | None = None,
                     stride: int = 1, padding: int = 0) -> int:
    """``floor((P + 2*pad - Q) / R) + 1``.

    Accepts a :class:`ConvSpec` or the raw ``(P, Q, R, pad)`` values.
    """
    if not isinstance(spec, ConvSpec):
        spec = ConvSpec(spec, kernel, stride, padding)
    spec.validate()
    return (spec.input_extent + 2 * spec.padding - spec.kernel_extent) // spec.stride + 1


def same_padding(kernel: int) -> int:
    if kernel % 2 == 0:
        raise ValueError(f"'same' padding needs an odd kernel, got {kernel}")
    return (kernel - 1) // 2


def resolve_padding(padding, kernel: int) -> int:
    if padding == "same":
        return same_padding(kernel)
    if padding == "valid":
        return 0
    return int(padding)


def receptive_field(layers: Sequence[tuple[int, int]]) -> int:
    """Receptive field of a stack of ``(kernel, stride)`` layers."""
    if not layers:
        raise ValueError("receptive_field needs at least one layer")
    rf, jump = 1, 1
    for k, s in layers:
        rf += (k - 1) * jump
        jump *= s
    return rf


def _im2col(xp: np.ndarray, kh: int, kw: int, stride: int, ho: int, wo: int) -> np.ndarray:
    n, c = xp.shape[:2]
    win = sliding_window_view(xp, (kh, kw), axis=(2, 3))
    win = win[:, :, : stride * (ho - 1) + 1: stride, : stride * (wo - 1) + 1: stride]
    # -> [N*Ho*Wo, C*kh*kw]
    return win.transpose(0, 2, 3, 1, 4, 5).reshape(n * ho * wo, c * kh * kw)


def _col2im(dcols_t: np.ndarray, shape_p: tuple, kh: int, kw: int, stride: int,
            ho: int, wo: int) -> np.ndarray:
    """Scatter-add window gradients ``[C*kh*kw, N*Ho*Wo]`` back onto the padded input."""
    n, c = shape_p[:2]
    d = dcols_t.reshape(c, kh, kw, n, ho, wo)
    dxp = np.zeros((c, n) + tuple(shape_p[2:]), dtype=dcols_t.dtype)
    for i in range(kh):
        for j in range(kw):
            dxp[:, :, i: i + stride * (ho - 1) + 1: stride, j: j + stride * (wo - 1) + 1: stride] += d[:, i, j]
    return dxp.transpose(1, 0, 2, 3)


def conv2d(x: Tensor, weight: Tensor, bias: Tensor | None = None, stride: int = 1,
           padding=0, groups: int = 1) -> Tensor:
    """2-D cross-correlation.

    ``weight`` is [F, C/groups, kH, kW]; with ``groups > 1`` the input
    channels are split into ``groups`` contiguous blocks, each convolved with
    its own ``F/groups`` filters, and the results concatenated.
    """
    if x.ndim != 4:
        raise ValueError(f"conv2d input must be [N,C,H,W], got shape {x.shape}")
    if weight.ndim != 4:
        raise ValueError(f"conv2d kernel must be [F,C,kH,kW], got shape {weight.shape}")
    n, c, h, w = x.shape
    f, cg, kh, kw = weight.shape
    if groups < 1 or c % groups or f % groups:
        raise ValueError(f"channels in={c} out={f} not divisible by groups={groups}")
    if cg * groups != c:
        raise ValueError(f"channel mismatch: input has C={c}, kernel expects C={cg * groups}")
    if bias is not None and bias.shape != (f,):
        raise ValueError(f"bias must have shape ({f},), got {bias.shape}")
    pad = resolve_padding(padding, kh)
    ho = conv_output_size(ConvSpec(h, kh, stride, pad))
    wo = conv_output_size(ConvSpec(w, kw, stride, pad))
    xp = np.pad(x.data, ((0, 0), (0, 0), (pad, pad), (pad, pad))) if pad else x.data
    fg = f // groups

    cols, outs = [], []
    for gi in range(groups):
        col = _im2col(xp[:, gi * cg:(gi + 1) * cg], kh, kw, stride, ho, wo)
        wmat = weight.data[gi * fg:(gi + 1) * fg].reshape(fg, -1)
        cols.append(col)
        outs.append(col @ wmat.T)
    out = outs[0] if groups == 1 else np.concatenate(outs, axis=1)
    out = out.reshape(n, ho, wo, f).transpose(0, 3, 1, 2)
    if bias is not None:
        out = out + bias.data.reshape(1, f, 1, 1)
    out = np.ascontiguousarray(out, dtype=x.dtype)

    def bw(g):
        g2t = g.transpose(1, 0, 2, 3).reshape(f, n * ho * wo)
        dw = np.empty_like(weight.data)
        dxp = np.empty(xp.shape, dtype=g.dtype) if groups > 1 else None
        for gi in range(groups):
            gs = g2t[gi * fg:(gi + 1) * fg]
            dw[gi * fg:(gi + 1) * fg] = (gs @ cols[gi]).reshape(fg, cg, kh, kw)
            wmat = weight.data[gi * fg:(gi + 1) * fg].reshape(fg, -1)
            part = _col2im(wmat.T @ gs, (n, cg) + xp.shape[2:], kh, kw, stride, ho, wo)
            if dxp is None:
                dxp = part
            else:
                dxp[:, gi * cg:(gi + 1) * cg] = part
        dx = dxp[:, :, pad: pad + h, pad: pad + w] if pad else dxp
        grads = [np.ascontiguousarray(dx), dw]
        if bias is not None:
            grads.append(g.sum(axis=(0, 2, 3)))
        return grads

    parents = (x, weight) if bias is None else (x, weight, bias)
    return _make(out, parents, bw, "conv2d")


def pool2d(x: Tensor, window: int, stride: int | None = None, mode: str = "max") -> Tensor:
    """Max or average pooling with no padding."""
    if mode not in ("max", "average", "avg"):
        raise ValueError(f"unknown pooling mode {mode!r}")
    if x.ndim != 4:
        raise ValueError(f"pool2d input must be [N,C,H,W], got shape {x.shape}")
    stride = stride or window
    n, c, h, w = x.shape
    if window > h or window > w:
        raise ValueError(f"pool window {window} larger than input {h}x{w}")
    ho = conv_output_size(ConvSpec(h, window, stride, 0))
    wo = conv_output_size(ConvSpec(w, window, stride, 0))
    win = sliding_window_view(x.data, (window, window), axis=(2, 3))
    win = win[:, :, : stride * (ho - 1) + 1: stride, : stride * (wo - 1) + 1: stride]
    flat = win.reshape(n, c, ho, wo, window * window)
    k2 = window * window

    if mode == "max":
        idx = flat.argmax(axis=-1)
        out = np.take_along_axis(flat, idx[..., None], axis=-1)[..., 0]
    else:
        idx = None
        out = flat.mean(axis=-1, dtype=x.dtype)
    out = np.ascontiguousarray(out, dtype=x.dtype)

    def bw(g):
        dx = np.zeros(x.shape, dtype=g.dtype)
        for p in range(k2):
            i, j = divmod(p, window)
            contrib = g * (idx == p) if idx is not None else g / k2
            dx[:, :, i: i + stride * (ho - 1) + 1: stride, j: j + stride * (wo - 1) + 1: stride] += contrib
        return (dx,)

    return _make(out, (x,), bw, f"{mode}pool")
