"""Loss, early stopping, the training loop and transfer-learning freezing."""
from __future__ import annotations

import logging
from dataclasses import asdict, dataclass, field
from typing import Callable

import numpy as np

from . import tensor as T
from .architectures import Model
from .nn import BatchNorm2d, Module
from .optim import Optimizer
from .tensor import Tensor, no_grad

log = logging.getLogger(__name__)

CLIP_EPS = 1e-12


@dataclass(frozen=True)
class TrainingConfig:
    epochs: int = 60
    batch_size: int = 16
    learning_rate: float = 1e-4
    dropout: float = 0.1
    optimizer: str = "adam"
    patience: int = 10
    min_delta: float = 0.0
    seed: int = 0

    def __post_init__(self):
        if self.epochs < 1:
            raise ValueError(f"epochs must be >= 1, got {self.epochs}")
        if self.batch_size < 1:
            raise ValueError(f"batch_size must be >= 1, got {self.batch_size}")
        if self.learning_rate < 0:
            raise ValueError(f"learning_rate must be non-negative, got {self.learning_rate}")
        if self.patience < 0:
            raise ValueError(f"patience must be >= 0, got {self.patience}")
        if self.optimizer not in ("adam", "sgd_momentum", "rmsprop"):
            raise ValueError(f"unknown optimizer {self.optimizer!r}")
        if not 0.0 <= self.dropout < 1.0:
            raise ValueError(f"dropout must lie in [0, 1), got {self.dropout}")

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, d: dict) -> "TrainingConfig":
        return cls(**d)


@dataclass
class EpochRecord:
    epoch: int
    train_loss: float
    train_accuracy: float
    val_loss: float
    val_accuracy: float


@dataclass
class TrainingHistory:
    records: list[EpochRecord] = field(default_factory=list)
    best_epoch: int = 0
    stopped_early: bool = False

    def column(self, name: str) -> list[float]:
        return [getattr(r, name) for r in self.records]

    def __len__(self) -> int:
        return len(self.records)


def categorical_cross_entropy(probs: Tensor, labels) -> Tensor:
    """Batch mean of ``-sum_k y_k * ln(p_k + 1e-12)``."""
    y = labels.data if isinstance(labels, Tensor) else np.asarray(labels)
    if probs.shape != y.shape:
        raise ValueError(f"probabilities {probs.shape} and labels {y.shape} differ in shape")
    y = T.Tensor(y, dtype=probs.dtype)
    per_sample = T.tsum(y * T.log(probs + CLIP_EPS), axis=1)
    return -T.mean(per_sample)


def one_hot(labels, k: int, dtype=np.float32) -> np.ndarray:
    labels = np.asarray(labels, dtype=np.int64)
    out = np.zeros((labels.size, k), dtype=dtype)
    out[np.arange(labels.size), labels] = 1
    return out


class EarlyStopping:
    """Tracks validation loss; signals stop after ``patience`` stale epochs."""

    def __init__(self, patience: int = 10, min_delta: float = 0.0):
        if patience < 0:
            raise ValueError("patience must be >= 0")
        self.patience, self.min_delta = patience, min_delta
        self.best = np.inf
        self.best_epoch = 0
        self.stale = 0
        self.epoch = 0

    def update(self, val_loss: float) -> tuple[str, bool]:
        """Record one epoch. Returns ``(decision, improved)`` with decision ``continue``/``stop``."""
        self.epoch += 1
        if val_loss < self.best - self.min_delta:
            self.best, self.best_epoch, self.stale = val_loss, self.epoch, 0
            return "continue", True
        self.stale += 1
        return ("stop" if self.stale >= self.patience else "continue"), False


def early_stopping_update(state: EarlyStopping, val_loss: float) -> tuple[str, bool]:
    return state.update(val_loss)


# -- evaluation helpers ------------------------------------------------------

def predict_proba(model: Model, x: np.ndarray, batch_size: int = 64) -> np.ndarray:
    was_training = model.training
    model.eval()
    try:
        with no_grad():
            outs = [model(Tensor(x[i:i + batch_size])).data for i in range(0, len(x), batch_size)]
    finally:
        model.train(was_training)
    return np.concatenate(outs, axis=0) if outs else np.zeros((0, model.config.num_classes), np.float32)


def evaluate(model: Model, x: np.ndarray, y: np.ndarray, batch_size: int = 64) -> tuple[float, float]:
    """Eval-mode ``(loss, accuracy)`` over a labelled set."""
    probs = predict_proba(model, x, batch_size)
    k = model.config.num_classes
    picked = probs[np.arange(len(y)), y].astype(np.float64)
    loss = float(-np.mean(np.log(picked + CLIP_EPS)))
    acc = float(np.mean(probs.argmax(axis=1) == y))
    return loss, acc


# -- parameter snapshots -----------------------------------------------------

def snapshot(model: Module) -> dict[str, np.ndarray]:
    return {name: t.data.copy() for name, t in model.state_dict().items()}


def restore(model: Module, snap: dict[str, np.ndarray]) -> None:
    for name, t in model.state_dict().items():
        t.data[...] = snap[name]


# -- transfer learning -------------------------------------------------------

def freeze_layers(model: Model, boundary) -> Model:
    """Freeze every top-level layer before ``boundary``.

    ``boundary`` is a layer name (that layer stays trainable) or a fraction in
    [0, 1] of the model's parameter tensors, counted from the input side.
    Frozen parameters stop requiring grad, and frozen batchnorm layers use
    their running statistics.
    """
    if isinstance(boundary, str):
        if boundary not in model.layer_names:
            raise KeyError(f"unknown layer {boundary!r}; layers are {model.layer_names}")
        cut = model.layer_names.index(boundary)
        frozen_layers = model.layer_names[:cut]
        for name in model.layer_names:
            layer = getattr(model, name)
            _set_frozen(layer, name in frozen_layers)
        return model

    frac = float(boundary)
    if not 0.0 <= frac <= 1.0:
        raise ValueError(f"freeze fraction must lie in [0, 1], got {boundary}")
    params = list(model.named_parameters())
    n_frozen = int(round(frac * len(params)))
    frozen_names = {name for name, _ in params[:n_frozen]}
    for name, p in params:
        p.requires_grad = name not in frozen_names
    for m in model.modules():
        if isinstance(m, BatchNorm2d):
            m.frozen = not (m.gamma.requires_grad or m.beta.requires_grad)
    return model


def _set_frozen(layer: Module, frozen: bool) -> None:
    for m in layer.modules():
        m.frozen = frozen
    for p in layer.parameters():
        p.requires_grad = not frozen


def trainable_parameters(model: Module):
    return [p for p in model.parameters() if p.requires_grad]


# -- training loop -----------------------------------------------------------

def train(model: Model, train_set: tuple[np.ndarray, np.ndarray], val_set: tuple[np.ndarray, np.ndarray],
          config: TrainingConfig, on_epoch_end: Callable[[EpochRecord], bool] | None = None
          ) -> tuple[Model, TrainingHistory]:
    """Mini-batch training with early stopping on validation loss.

    ``train_set``/``val_set`` are ``(images [N,C,H,W], integer labels [N])``.
    The model is restored to its best-validation-loss epoch before returning.
    ``on_epoch_end`` may return True to end the run after that epoch.
    """
    x_tr, y_tr = train_set
    x_va, y_va = val_set
    if len(x_tr) == 0 or len(x_va) == 0:
        raise ValueError("training and validation sets must be non-empty")
    expected = model.config.input_shape
    for name, x in (("train", x_tr), ("validation", x_va)):
        if tuple(x.shape[1:]) != expected:
            raise ValueError(f"{name} images have shape {x.shape[1:]}, model expects {expected}")
    k = model.config.num_classes
    for name, y in (("train", y_tr), ("validation", y_va)):
        if len(y) and (y.min() < 0 or y.max() >= k):
            raise ValueError(f"{name} labels outside [0, {k})")

    for d in model.dropout_layers():
        d.rate = config.dropout
    params = trainable_parameters(model)
    opt = Optimizer(params, config.optimizer, config.learning_rate)
    stopper = EarlyStopping(config.patience, config.min_delta)
    history = TrainingHistory()
    best = snapshot(model)
    y_tr_1h = one_hot(y_tr, k, dtype=x_tr.dtype)
    n = len(x_tr)

    for epoch in range(1, config.epochs + 1):
        model.train()
        rng = np.random.default_rng(config.seed + epoch)
        for d in model.dropout_layers():
            d.reseed([config.seed, epoch])
        order = rng.permutation(n)
        loss_sum, correct = 0.0, 0
        for start in range(0, n, config.batch_size):
            idx = order[start:start + config.batch_size]
            probs = model(Tensor(x_tr[idx]))
            loss = categorical_cross_entropy(probs, y_tr_1h[idx])
            if params:
                opt.zero_grad()
                T.backward(loss)
                opt.step()
            loss_sum += loss.item() * len(idx)
            correct += int(np.sum(probs.data.argmax(axis=1) == y_tr[idx]))
        val_loss, val_acc = evaluate(model, x_va, y_va)
        rec = EpochRecord(epoch, loss_sum / n, correct / n, val_loss, val_acc)
        history.records.append(rec)
        decision, improved = stopper.update(val_loss)
        if improved:
            best = snapshot(model)
            history.best_epoch = epoch
        log.info("epoch %d loss %.4f acc %.4f val_loss %.4f val_acc %.4f",
                 epoch, rec.train_loss, rec.train_accuracy, val_loss, val_acc)
        if decision == "stop":
            history.stopped_early = True
            break
        if on_epoch_end is not None and on_epoch_end(rec):
            break

    restore(model, best)
    model.eval()
    return model, history
