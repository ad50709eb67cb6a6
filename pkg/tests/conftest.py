"""Shared oracles and fixtures.

The loop-based conv/pool references here are deliberately naive and share no
code with the package.
"""
from __future__ import annotations

import numpy as np
import pytest

from dvsnet import tensor as T
from dvsnet.tensor import Tensor

# Reference confusion matrices, rows = predicted, columns = actual.
CLASS_NAMES = ["Benign", "Malignant Early Pre-B", "Malignant Pre-B", "Malignant Pro-B"]
ENSEMBLE_CM = np.array([
    [1436, 10, 1, 17],
    [175, 3064, 81, 6],
    [23, 131, 3088, 2],
    [23, 1, 2, 2564],
])
DENSENET_CM = np.array([
    [1559, 69, 12, 1],
    [96, 3180, 4, 1],
    [1, 6, 3182, 1],
    [14, 0, 0, 2626],
])
# Reference per-class scores for ENSEMBLE_CM (whole percent) and its support row.
ENSEMBLE_SCORES = {
    "precision": [98, 92, 95, 99],
    "recall": [87, 95, 97, 99],
    "f1": [92, 93, 96, 99],
    "support": [1657, 3206, 3172, 2589],
}
# (class size, train, validation) rows of the split table.
SPLIT_ROWS = [(505, 353, 101), (796, 557, 159), (955, 668, 191), (979, 685, 195)]


def naive_conv2d(x, w, b=None, stride=1, padding=0, groups=1):
    n, c, h, wd = x.shape
    f, cg, kh, kw = w.shape
    xp = np.zeros((n, c, h + 2 * padding, wd + 2 * padding), dtype=np.float64)
    xp[:, :, padding:padding + h, padding:padding + wd] = x
    ho = (h + 2 * padding - kh) // stride + 1
    wo = (wd + 2 * padding - kw) // stride + 1
    fg = f // groups
    out = np.zeros((n, f, ho, wo))
    for i in range(n):
        for o in range(f):
            g = o // fg
            for y in range(ho):
                for xx in range(wo):
                    acc = 0.0
                    for ci in range(cg):
                        for dy in range(kh):
                            for dx in range(kw):
                                acc += xp[i, g * cg + ci, y * stride + dy, xx * stride + dx] * w[o, ci, dy, dx]
                    out[i, o, y, xx] = acc + (b[o] if b is not None else 0.0)
    return out


def naive_pool2d(x, window, stride, mode):
    n, c, h, w = x.shape
    ho, wo = (h - window) // stride + 1, (w - window) // stride + 1
    out = np.zeros((n, c, ho, wo))
    for i in range(n):
        for ch in range(c):
            for y in range(ho):
                for xx in range(wo):
                    patch = x[i, ch, y * stride:y * stride + window, xx * stride:xx * stride + window]
                    out[i, ch, y, xx] = patch.max() if mode == "max" else patch.mean()
    return out


def numeric_grad(fn, arrays, idx, h=1e-6):
    """Central differences of scalar ``fn(arrays)`` with respect to ``arrays[idx]``."""
    a = arrays[idx]
    grad = np.zeros_like(a)
    it = np.nditer(a, flags=["multi_index"])
    for _ in it:
        j = it.multi_index
        old = a[j]
        a[j] = old + h
        up = fn(arrays)
        a[j] = old - h
        down = fn(arrays)
        a[j] = old
        grad[j] = (up - down) / (2 * h)
    return grad


def rel_error(analytic, numeric, floor=1e-5):
    """Max absolute deviation scaled by the larger gradient magnitude.

    ``floor`` keeps identically-zero gradients (a conv bias feeding batchnorm,
    say) from turning ~1e-9 finite-difference noise into a large ratio.
    """
    scale = max(np.abs(analytic).max(), np.abs(numeric).max(), floor)
    return float(np.abs(analytic - numeric).max() / scale)


def gradcheck(op, arrays, seed=0, wrt=None):
    """Compare autograd against central differences for ``sum(op(*tensors) * R)``.

    ``op`` maps float64 tensors to a tensor; ``R`` is a fixed random weighting so
    every output element contributes.  Returns the worst relative error.
    """
    arrays = [np.array(a, dtype=np.float64) for a in arrays]
    wrt = range(len(arrays)) if wrt is None else wrt
    rng = np.random.default_rng(seed)
    probe = {}

    def scalar(arrs):
        with T.no_grad():
            out = op(*[Tensor(a, dtype=np.float64) for a in arrs]).data
        if "r" not in probe:
            probe["r"] = rng.standard_normal(out.shape)
        return float((out * probe["r"]).sum())

    scalar(arrays)
    tensors = [Tensor(a, requires_grad=True, dtype=np.float64) for a in arrays]
    out = op(*tensors)
    loss = T.tsum(out * Tensor(probe["r"], dtype=np.float64))
    T.backward(loss)
    return max(rel_error(tensors[i].grad, numeric_grad(scalar, arrays, i)) for i in wrt)


def module_gradcheck(module, x, seed=0):
    """Gradient check of a module w.r.t. its input and every parameter (float64)."""
    module.astype(np.float64)
    rng = np.random.default_rng(seed)
    x = np.array(x, dtype=np.float64)
    params = module.parameters()
    with T.no_grad():
        r = rng.standard_normal(module(Tensor(x, dtype=np.float64)).shape)

    def scalar_x(arrs):
        with T.no_grad():
            return float((module(Tensor(arrs[0], dtype=np.float64)).data * r).sum())

    xt = Tensor(x, requires_grad=True, dtype=np.float64)
    module.zero_grad()
    T.backward(T.tsum(module(xt) * Tensor(r, dtype=np.float64)))
    errs = [rel_error(xt.grad, numeric_grad(scalar_x, [x], 0))]
    for p in params:
        analytic = p.grad.copy()

        def scalar_p(arrs, p=p):
            saved = p.data
            p.data = arrs[0]
            try:
                return scalar_x([x])
            finally:
                p.data = saved
        errs.append(rel_error(analytic, numeric_grad(scalar_p, [p.data.copy()], 0)))
    return max(errs)


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


@pytest.fixture(scope="session")
def ensemble_fixture():
    """Three members, each right on a disjoint-ish random 60% of 1000 samples."""
    return make_ensemble_fixture()


def make_ensemble_fixture(n=1000, k=4, members=3, acc=0.6, seed=7):
    rng = np.random.default_rng(seed)
    y = rng.integers(0, k, size=n)
    outs = []
    for _ in range(members):
        correct = np.zeros(n, dtype=bool)
        correct[rng.choice(n, size=int(acc * n), replace=False)] = True
        p = np.zeros((n, k))
        for i in range(n):
            if correct[i]:
                target = y[i]
            else:
                target = (y[i] + rng.integers(1, k)) % k
            p[i] = rng.dirichlet(np.ones(k)) * 0.3
            p[i, target] += 0.7
        outs.append(p)
    return outs, y
