"""Adam, RMSProp and SGD with momentum.

The ``*_step`` functions update numpy arrays in place and are what the
optimizer classes call; tests drive them directly.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .nn import Parameter


@dataclass
class OptimizerState:
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    momentum: float = 0.9
    rho: float = 0.9
    step: int = 0
    m: list[np.ndarray] = field(default_factory=list)
    v: list[np.ndarray] = field(default_factory=list)

    def ensure(self, params: Sequence[np.ndarray], need_v: bool = True) -> None:
        if not self.m:
            self.m = [np.zeros_like(p) for p in params]
        if need_v and not self.v:
            self.v = [np.zeros_like(p) for p in params]
        for p, m in zip(params, self.m):
            if p.shape != m.shape:
                raise ValueError(f"optimizer state shape {m.shape} != parameter shape {p.shape}")


def adam_step(params: Sequence[np.ndarray], grads: Sequence[np.ndarray],
              state: OptimizerState, lr: float) -> None:
    state.ensure(params)
    state.step += 1
    b1, b2 = state.beta1, state.beta2
    c1 = 1.0 - b1 ** state.step
    c2 = 1.0 - b2 ** state.step
    for p, g, m, v in zip(params, grads, state.m, state.v):
        m *= b1
        m += (1 - b1) * g
        v *= b2
        v += (1 - b2) * g * g
        p -= (lr * (m / c1) / (np.sqrt(v / c2) + state.eps)).astype(p.dtype)


def rmsprop_step(params: Sequence[np.ndarray], grads: Sequence[np.ndarray],
                 state: OptimizerState, lr: float) -> None:
    state.ensure(params)
    state.step += 1
    rho = state.rho
    for p, g, v in zip(params, grads, state.v):
        v *= rho
        v += (1 - rho) * g * g
        p -= (lr * g / (np.sqrt(v) + state.eps)).astype(p.dtype)


def sgd_momentum_step(params: Sequence[np.ndarray], grads: Sequence[np.ndarray],
                      state: OptimizerState, lr: float) -> None:
    state.ensure(params, need_v=False)
    state.step += 1
    for p, g, m in zip(params, grads, state.m):
        m *= state.momentum
        m += g
        p -= (lr * m).astype(p.dtype)


STEPS = {"adam": adam_step, "rmsprop": rmsprop_step, "sgd_momentum": sgd_momentum_step}


class Optimizer:
    def __init__(self, params: Sequence[Parameter], kind: str = "adam", lr: float = 1e-4, **hyper):
        if kind not in STEPS:
            raise ValueError(f"unknown optimizer {kind!r}; expected one of {sorted(STEPS)}")
        self.params = list(params)
        self.kind, self.lr = kind, lr
        self.state = OptimizerState(**hyper)

    def step(self) -> None:
        live = [p for p in self.params if p.grad is not None]
        if len(live) != len(self.params):
            # keep state slots aligned with self.params
            grads = [p.grad if p.grad is not None else np.zeros_like(p.data) for p in self.params]
        else:
            grads = [p.grad for p in self.params]
        STEPS[self.kind]([p.data for p in self.params], grads, self.state, self.lr)

    def zero_grad(self) -> None:
        for p in self.params:
            p.grad = None


def Adam(params, lr=1e-4, beta1=0.9, beta2=0.999, eps=1e-8):
    return Optimizer(params, "adam", lr, beta1=beta1, beta2=beta2, eps=eps)


def RMSProp(params, lr=1e-4, rho=0.9, eps=1e-8):
    return Optimizer(params, "rmsprop", lr, rho=rho, eps=eps)


def SGDMomentum(params, lr=1e-4, momentum=0.9):
    return Optimizer(params, "sgd_momentum", lr, momentum=momentum)
