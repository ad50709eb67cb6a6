"""Soft-voting fusion of member class-probability outputs."""
from __future__ import annotations

import csv
import io
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np

from . import tensor as T
from .optim import Optimizer
from .tensor import Tensor

FUSIONS = ("mean", "weighted", "trained_linear")


@dataclass
class EnsembleSpec:
    members: list[str]
    fusion: str = "mean"
    weights: list[float] | None = None
    linear: tuple[np.ndarray, np.ndarray] | None = field(default=None, repr=False)

    def __post_init__(self):
        if len(self.members) < 2:
            raise ValueError("an ensemble needs at least two members")
        if self.fusion not in FUSIONS:
            raise ValueError(f"unknown fusion {self.fusion!r}; expected one of {FUSIONS}")
        if self.fusion == "weighted":
            if self.weights is None or len(self.weights) != len(self.members):
                raise ValueError("weighted fusion needs one weight per member")
            w = np.asarray(self.weights, dtype=np.float64)
            if (w < 0).any() or not np.isclose(w.sum(), 1.0):
                raise ValueError("fusion weights must be non-negative and sum to 1")


def argmax_label(probs) -> int | np.ndarray:
    """Index of the largest probability; ties go to the lowest index."""
    p = np.asarray(probs)
    return int(np.argmax(p)) if p.ndim == 1 else np.argmax(p, axis=-1)


def _stack(member_probs: Sequence) -> np.ndarray:
    arrs = [np.asarray(m.data if isinstance(m, Tensor) else m, dtype=np.float64) for m in member_probs]
    shape = arrs[0].shape
    for i, a in enumerate(arrs):
        if a.shape != shape or a.ndim != 2:
            raise ValueError(f"member {i} output shape {a.shape} does not match {shape}")
    return np.stack(arrs)


def ensemble_predict(member_probs: Sequence, spec: EnsembleSpec) -> np.ndarray:
    p = _stack(member_probs)
    if len(p) != len(spec.members):
        raise ValueError(f"{len(p)} member outputs for {len(spec.members)} members")
    # written as an offset from the first member so identical members fuse to it exactly
    if spec.fusion == "mean":
        return p[0] + (p - p[0]).mean(axis=0)
    if spec.fusion == "weighted":
        w = np.asarray(spec.weights, dtype=np.float64)
        return p[0] + np.tensordot(w, p - p[0], axes=1)
    if spec.linear is None:
        raise ValueError("trained_linear fusion needs fitted weights; call fit_linear_fusion first")
    W, b = spec.linear
    z = _concat_members(p) @ W.T + b
    z -= z.max(axis=1, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=1, keepdims=True)


def _concat_members(p: np.ndarray) -> np.ndarray:
    m, n, k = p.shape
    return p.transpose(1, 0, 2).reshape(n, m * k)


def fit_linear_fusion(member_probs: Sequence, labels: Sequence[int], epochs: int = 200,
                      lr: float = 0.05, seed: int = 0) -> tuple[np.ndarray, np.ndarray]:
    """Fit ``softmax(W [p_1..p_M] + b)`` on held-out member outputs (stacking)."""
    p = _stack(member_probs)
    x = _concat_members(p)
    n, k = p.shape[1], p.shape[2]
    y = np.zeros((n, k))
    y[np.arange(n), np.asarray(labels)] = 1
    rng = np.random.default_rng(seed)
    # start from plain averaging
    W = T.Tensor(np.tile(np.eye(k), (1, p.shape[0])) / p.shape[0] + 0.01 * rng.standard_normal((k, x.shape[1])),
                 requires_grad=True, dtype=np.float64)
    b = T.Tensor(np.zeros(k), requires_grad=True, dtype=np.float64)
    opt = Optimizer([W, b], "adam", lr)
    xt = Tensor(x, dtype=np.float64)
    yt = Tensor(y, dtype=np.float64)
    for _ in range(epochs):
        probs = T.softmax(T.dense(xt, W, b), axis=1)
        loss = -T.mean(T.tsum(yt * T.log(probs + 1e-12), axis=1))
        opt.zero_grad()
        T.backward(loss)
        opt.step()
    return W.data.copy(), b.data.copy()


# -- probability CSV interchange ---------------------------------------------

def write_probabilities(path, sample_ids: Sequence[str], probs: np.ndarray, header_comment: str | None = None) -> str:
    """CSV with columns ``sample_id, p_0 .. p_{K-1}``; floats written round-trip exact."""
    probs = np.asarray(probs)
    buf = io.StringIO()
    if header_comment:
        buf.write(f"# {header_comment}\n")
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["sample_id"] + [f"p_{i}" for i in range(probs.shape[1])])
    for sid, row in zip(sample_ids, probs):
        w.writerow([sid] + [repr(float(v)) for v in row])
    text = buf.getvalue()
    if path is not None:
        Path(path).write_text(text)
    return text


def read_probabilities(path) -> tuple[list[str], np.ndarray]:
    lines = [ln for ln in Path(path).read_text().splitlines() if ln and not ln.startswith("#")]
    rows = list(csv.reader(lines))
    header, body = rows[0], rows[1:]
    if header[0] != "sample_id" or not all(h == f"p_{i}" for i, h in enumerate(header[1:])):
        raise ValueError(f"{path}: expected header sample_id,p_0..p_K-1, got {header}")
    ids = [r[0] for r in body]
    probs = np.array([[float(v) for v in r[1:]] for r in body], dtype=np.float64)
    return ids, probs.reshape(len(ids), len(header) - 1)
