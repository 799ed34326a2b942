"""Frame-level classification and agreement metrics."""
from __future__ import annotations

from collections import Counter
from dataclasses import dataclass
from fractions import Fraction

import numpy as np

from . import labels as L


@dataclass
class ConfusionMatrix:
    counts: np.ndarray  # rows truth, columns predicted

    def normalized(self) -> np.ndarray:
        """Row-normalized view; rows of absent classes stay zero."""
        rows = self.counts.sum(axis=1, keepdims=True)
        with np.errstate(invalid="ignore", divide="ignore"):
            out = np.where(rows > 0, self.counts / np.maximum(rows, 1), 0.0)
        return out

    @property
    def total(self) -> int:
        return int(self.counts.sum())


def confusion(truth, pred, n_classes: int = L.N_CLASSES) -> ConfusionMatrix:
    truth = [L.to_index(t) for t in truth]
    pred = [L.to_index(p) for p in pred]
    if len(truth) != len(pred):
        raise ValueError(f"length mismatch: {len(truth)} truth vs {len(pred)} predictions")
    counts = np.zeros((n_classes, n_classes), dtype=np.int64)
    np.add.at(counts, (np.asarray(truth, dtype=np.int64), np.asarray(pred, dtype=np.int64)), 1)
    return ConfusionMatrix(counts)


@dataclass
class F1Report:
    precision: np.ndarray
    recall: np.ndarray
    f1: np.ndarray
    support: np.ndarray
    macro_precision: float
    macro_recall: float
    macro_f1: float

    def to_dict(self):
        return {
            "per_class": {
                name: {"precision": float(self.precision[i]), "recall": float(self.recall[i]),
                       "f1": float(self.f1[i]), "support": int(self.support[i])}
                for i, name in enumerate(L.CLASSES[: len(self.f1)])
            },
            "macro_precision": self.macro_precision,
            "macro_recall": self.macro_recall,
            "macro_f1": self.macro_f1,
        }


def _frac(num, den) -> Fraction:
    return Fraction(num, den) if den else Fraction(0)


def macro_f1(cm: ConfusionMatrix) -> F1Report:
    """Per-class precision/recall/F1 and their unweighted means.

    0/0 is taken as 0. Means run over classes that occur in the truth.
    Arithmetic is exact (rational) until the final conversion to float.
    """
    c = np.asarray(cm.counts, dtype=np.int64)
    k = c.shape[0]
    support = c.sum(axis=1)
    predicted = c.sum(axis=0)
    p = [_frac(int(c[i, i]), int(predicted[i])) for i in range(k)]
    r = [_frac(int(c[i, i]), int(support[i])) for i in range(k)]
    f = [2 * p[i] * r[i] / (p[i] + r[i]) if p[i] + r[i] else Fraction(0)
         for i in range(k)]
    present = [i for i in range(k) if support[i] > 0]

    def mean(xs):
        return float(sum((xs[i] for i in present), Fraction(0)) / len(present)) if present else 0.0

    return F1Report(np.array([float(x) for x in p]), np.array([float(x) for x in r]),
                    np.array([float(x) for x in f]), support.astype(np.int64),
                    mean(p), mean(r), mean(f))


def mae(truth, pred) -> float:
    truth = np.asarray(truth, dtype=np.float64)
    pred = np.asarray(pred, dtype=np.float64)
    if truth.shape != pred.shape or truth.ndim != 1:
        raise ValueError("mae expects two 1-D sequences of equal length")
    if truth.size == 0:
        raise ValueError("mae of empty sequences is undefined")
    return float(np.abs(truth - pred).sum() / truth.size)


def cohens_kappa(labels_a, labels_b) -> float:
    a, b = list(labels_a), list(labels_b)
    if len(a) != len(b):
        raise ValueError("annotator sequences differ in length")
    if not a:
        raise ValueError("kappa of empty sequences is undefined")
    n = len(a)
    ca, cb = Counter(a), Counter(b)
    p_o = Fraction(sum(x == y for x, y in zip(a, b)), n)
    p_e = sum((Fraction(ca[c] * cb[c], n * n) for c in ca), Fraction(0))
    if p_e == 1:
        return 1.0 if p_o == 1 else 0.0
    return float((p_o - p_e) / (1 - p_e))


def confusion_csv(cm: ConfusionMatrix, normalized: bool = False) -> str:
    data = cm.normalized() if normalized else cm.counts
    names = L.CLASSES[: data.shape[0]]
    lines = ["truth\\pred," + ",".join(names)]
    for name, row in zip(names, data):
        cells = [f"{v:.6f}" for v in row] if normalized else [str(int(v)) for v in row]
        lines.append(name + "," + ",".join(cells))
    return "\n".join(lines) + "\n"
