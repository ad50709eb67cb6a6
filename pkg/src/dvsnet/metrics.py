"""Confusion matrices and per-class classification metrics.

Orientation throughout: ``counts[i, j]`` is the number of samples predicted
as class ``i`` whose actual class is ``j`` (rows = predicted, columns =
actual), so column sums are the per-class support.
"""
from __future__ import annotations

import csv
import io
import json
from dataclasses import dataclass, field
from decimal import ROUND_HALF_UP, Decimal
from pathlib import Path
from typing import Sequence

import numpy as np


@dataclass
class ConfusionMatrix:
    counts: np.ndarray
    class_names: list[str] = field(default_factory=list)

    def __post_init__(self):
        self.counts = np.asarray(self.counts, dtype=np.int64)
        k = self.counts.shape[0]
        if self.counts.ndim != 2 or self.counts.shape != (k, k):
            raise ValueError(f"confusion matrix must be square, got shape {self.counts.shape}")
        if (self.counts < 0).any():
            raise ValueError("confusion matrix counts must be non-negative")
        if not self.class_names:
            self.class_names = [str(i) for i in range(k)]
        if len(self.class_names) != k:
            raise ValueError(f"{len(self.class_names)} class names for a {k}x{k} matrix")

    @property
    def k(self) -> int:
        return self.counts.shape[0]

    @property
    def total(self) -> int:
        return int(self.counts.sum())

    def support(self) -> np.ndarray:
        return self.counts.sum(axis=0)

    def to_csv(self, path=None) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["predicted\\actual"] + list(self.class_names))
        for name, row in zip(self.class_names, self.counts):
            w.writerow([name] + [int(v) for v in row])
        text = buf.getvalue()
        if path is not None:
            Path(path).write_text(text)
        return text

    @classmethod
    def from_csv(cls, path_or_text) -> "ConfusionMatrix":
        text = path_or_text
        if isinstance(path_or_text, Path) or (isinstance(path_or_text, str) and "\n" not in path_or_text):
            text = Path(path_or_text).read_text()
        rows = [r for r in csv.reader(io.StringIO(text)) if r and not r[0].startswith("#")]
        header, body = rows[0], rows[1:]
        names = header[1:]
        if len(body) != len(names):
            raise ValueError(f"expected {len(names)} data rows, found {len(body)}")
        counts = [[int(v) for v in r[1:]] for r in body]
        return cls(np.array(counts), names)


@dataclass(frozen=True)
class ClassCounts:
    tp: int
    fp: int
    fn: int
    tn: int

    @property
    def total(self) -> int:
        return self.tp + self.fp + self.fn + self.tn


def confusion_matrix(predicted: Sequence[int], actual: Sequence[int], k: int,
                     class_names: Sequence[str] | None = None) -> ConfusionMatrix:
    predicted = np.asarray(predicted, dtype=np.int64)
    actual = np.asarray(actual, dtype=np.int64)
    if predicted.shape != actual.shape:
        raise ValueError(f"label sequences differ in length: {predicted.size} vs {actual.size}")
    for name, labels in (("predicted", predicted), ("actual", actual)):
        if labels.size and (labels.min() < 0 or labels.max() >= k):
            raise ValueError(f"{name} label outside [0, {k})")
    counts = np.zeros((k, k), dtype=np.int64)
    np.add.at(counts, (predicted, actual), 1)
    return ConfusionMatrix(counts, list(class_names) if class_names else [])


def class_counts(cm: ConfusionMatrix, c: int) -> ClassCounts:
    if not 0 <= c < cm.k:
        raise IndexError(f"class {c} out of range for {cm.k} classes")
    tp = int(cm.counts[c, c])
    fp = int(cm.counts[c, :].sum()) - tp
    fn = int(cm.counts[:, c].sum()) - tp
    return ClassCounts(tp, fp, fn, cm.total - tp - fp - fn)


def _ratio(num: int, den: int) -> tuple[float, bool]:
    """``num/den``, or ``(0.0, degenerate=True)`` for a zero denominator."""
    return (0.0, True) if den == 0 else (num / den, False)


def accuracy(cm: ConfusionMatrix) -> float:
    if cm.total == 0:
        raise ValueError("accuracy of an empty confusion matrix")
    return float(np.trace(cm.counts)) / cm.total


def precision(cm: ConfusionMatrix, c: int, with_flag: bool = False):
    cc = class_counts(cm, c)
    val, flag = _ratio(cc.tp, cc.tp + cc.fp)
    return (val, flag) if with_flag else val


def recall(cm: ConfusionMatrix, c: int, with_flag: bool = False):
    cc = class_counts(cm, c)
    val, flag = _ratio(cc.tp, cc.tp + cc.fn)
    return (val, flag) if with_flag else val


def f1_from(p: float, r: float) -> float:
    return 0.0 if p + r == 0 else 2 * p * r / (p + r)


def f1(cm: ConfusionMatrix, c: int) -> float:
    return f1_from(precision(cm, c), recall(cm, c))


def specificity(cm: ConfusionMatrix, c: int, with_flag: bool = False):
    cc = class_counts(cm, c)
    val, flag = _ratio(cc.tn, cc.tn + cc.fp)
    return (val, flag) if with_flag else val


def round_half_up(x: float, decimals: int) -> float:
    q = Decimal(1).scaleb(-decimals)
    return float(Decimal(repr(x)).quantize(q, rounding=ROUND_HALF_UP))


@dataclass
class MetricsReport:
    class_names: list[str]
    precision: list[float]
    recall: list[float]
    f1: list[float]
    specificity: list[float]
    support: list[int]
    accuracy: float
    macro_precision: float
    macro_recall: float
    macro_f1: float
    degenerate: list[str] = field(default_factory=list)

    def to_dict(self) -> dict:
        per_class = {
            name: {"precision": self.precision[i], "recall": self.recall[i], "f1": self.f1[i],
                   "specificity": self.specificity[i], "support": self.support[i]}
            for i, name in enumerate(self.class_names)
        }
        return {"accuracy": self.accuracy, "per_class": per_class,
                "macro": {"precision": self.macro_precision, "recall": self.macro_recall,
                          "f1": self.macro_f1},
                "class_names": list(self.class_names), "degenerate": list(self.degenerate)}

    def to_json(self, path=None, **extra) -> str:
        d = self.to_dict()
        d.update(extra)
        text = json.dumps(d, indent=2, sort_keys=True) + "\n"
        if path is not None:
            Path(path).write_text(text)
        return text

    def rows(self, decimals: int = 2, percent: bool = True) -> list[list[str]]:
        """Per-class table with metrics as rows and classes as columns."""
        def fmt(v):
            if percent:
                return f"{round_half_up(v * 100, max(decimals - 2, 0)):g}%"
            return f"{round_half_up(v, decimals):.{decimals}f}"
        out = [[""] + list(self.class_names)]
        for label, vals in (("Precision", self.precision), ("Recall", self.recall),
                            ("F1-score", self.f1), ("Specificity", self.specificity)):
            out.append([label] + [fmt(v) for v in vals])
        out.append(["Support (N)"] + [str(s) for s in self.support])
        return out

    def render(self, decimals: int = 2, percent: bool = True) -> str:
        rows = self.rows(decimals, percent)
        widths = [max(len(r[i]) for r in rows) for i in range(len(rows[0]))]
        lines = ["  ".join(cell.ljust(w) for cell, w in zip(r, widths)).rstrip() for r in rows]
        lines.append(f"Accuracy {self.accuracy * 100:.2f}%")
        return "\n".join(lines)

    def to_csv(self, path=None, decimals: int = 2) -> str:
        buf = io.StringIO()
        csv.writer(buf, lineterminator="\n").writerows(self.rows(decimals, percent=False))
        text = buf.getvalue()
        if path is not None:
            Path(path).write_text(text)
        return text


def classification_report(cm: ConfusionMatrix) -> MetricsReport:
    prec, rec, f1s, spec, degenerate = [], [], [], [], []
    for c, name in enumerate(cm.class_names):
        p, pf = precision(cm, c, with_flag=True)
        r, rf = recall(cm, c, with_flag=True)
        s, sf = specificity(cm, c, with_flag=True)
        for flag, metric in ((pf, "precision"), (rf, "recall"), (sf, "specificity")):
            if flag:
                degenerate.append(f"{name}:{metric}")
        prec.append(p)
        rec.append(r)
        f1s.append(f1_from(p, r))
        spec.append(s)
    return MetricsReport(
        class_names=list(cm.class_names), precision=prec, recall=rec, f1=f1s, specificity=spec,
        support=[int(v) for v in cm.support()],
        accuracy=accuracy(cm) if cm.total else 0.0,
        macro_precision=float(np.mean(prec)), macro_recall=float(np.mean(rec)),
        macro_f1=float(np.mean(f1s)), degenerate=degenerate)
