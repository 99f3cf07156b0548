"""Confusion-based metrics (accuracy, precision, recall, F1, MCC) and ROC AUC.

Degenerate cases keep their identity: MCC returns 0 when any denominator
factor is zero, while precision/recall/F1 become None ("undefined") rather
than silently collapsing to 0, so report means are not distorted.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass

import numpy as np
from scipy.stats import rankdata

from .errors import LengthMismatch, OneClassOnly

METRIC_NAMES = ("roc_auc", "mcc", "accuracy", "precision", "f1")


@dataclass(frozen=True)
class ConfusionCounts:
    tp: int = 0
    fp: int = 0
    tn: int = 0
    fn: int = 0

    @property
    def total(self) -> int:
        return self.tp + self.fp + self.tn + self.fn


def confusion(pred, truth) -> ConfusionCounts:
    pred = np.asarray(pred)
    truth = np.asarray(truth)
    if pred.shape != truth.shape:
        raise LengthMismatch(f"pred has {pred.shape}, truth has {truth.shape}")
    if pred.size == 0:
        raise LengthMismatch("arrays must be nonempty")
    p = pred.astype(bool)
    t = truth.astype(bool)
    return ConfusionCounts(
        tp=int(np.sum(p & t)),
        fp=int(np.sum(p & ~t)),
        tn=int(np.sum(~p & ~t)),
        fn=int(np.sum(~p & t)),
    )


def mcc(c: ConfusionCounts) -> float:
    """Matthews correlation coefficient; 0 when any sum factor is zero."""
    factors = [(c.tp + c.fp), (c.tp + c.fn), (c.tn + c.fp), (c.tn + c.fn)]
    if any(f == 0 for f in factors):
        return 0.0
    num = c.tp * c.tn - c.fp * c.fn
    return num / math.sqrt(math.prod(float(f) for f in factors))


def accuracy(c: ConfusionCounts) -> float:
    return (c.tp + c.tn) / c.total


def precision(c: ConfusionCounts) -> float | None:
    if c.tp + c.fp == 0:
        return None
    return c.tp / (c.tp + c.fp)


def recall(c: ConfusionCounts) -> float | None:
    if c.tp + c.fn == 0:
        return None
    return c.tp / (c.tp + c.fn)


def f1(c: ConfusionCounts) -> float | None:
    p, r = precision(c), recall(c)
    if p is None or r is None or p + r == 0:
        return None
    return 2.0 * p * r / (p + r)


def roc_auc(scores, truth) -> float:
    """Rank-based AUC: P(score of random positive > random negative), ties 1/2."""
    scores = np.asarray(scores, dtype=np.float64)
    truth = np.asarray(truth).astype(bool)
    if scores.shape != truth.shape:
        raise LengthMismatch(f"scores have {scores.shape}, truth has {truth.shape}")
    n_pos = int(truth.sum())
    n_neg = len(truth) - n_pos
    if n_pos == 0 or n_neg == 0:
        raise OneClassOnly("ROC AUC needs both a positive and a negative sample")
    ranks = rankdata(scores, method="average")
    return (ranks[truth].sum() - n_pos * (n_pos + 1) / 2.0) / (n_pos * n_neg)


@dataclass(frozen=True)
class MetricsRow:
    roc_auc: float | None = None
    mcc: float | None = None
    accuracy: float | None = None
    precision: float | None = None
    f1: float | None = None

    def get(self, name: str) -> float | None:
        return getattr(self, name)


def row_from_counts(c: ConfusionCounts, scores=None, truth=None) -> MetricsRow:
    """All five metrics from counts, with AUC from scores if both classes occur."""
    auc = None
    if scores is not None and truth is not None:
        t = np.asarray(truth).astype(bool)
        if 0 < t.sum() < len(t):
            auc = roc_auc(scores, truth)
    return MetricsRow(
        roc_auc=auc, mcc=mcc(c), accuracy=accuracy(c), precision=precision(c), f1=f1(c)
    )


@dataclass
class MetricsReport:
    per_class: dict  # class name -> MetricsRow
    mean: MetricsRow
    undefined_counts: dict  # metric name -> number of classes excluded from the mean

    def to_json_dict(self) -> dict:
        def row_dict(row):
            return {m: row.get(m) for m in METRIC_NAMES}

        return {
            "classes": {name: row_dict(row) for name, row in self.per_class.items()},
            "mean": row_dict(self.mean),
            "undefined_counts": self.undefined_counts,
        }

    def to_json(self) -> str:
        return json.dumps(self.to_json_dict(), indent=2, sort_keys=True)

    def to_text(self) -> str:
        """Table with metrics as rows and classes as columns, percent, 2 decimals."""
        labels = {"roc_auc": "ROC AUC", "mcc": "MCC", "accuracy": "Accuracy",
                  "precision": "Precision", "f1": "F1 score"}
        columns = list(self.per_class) + ["Mean"]
        rows = [[""] + columns]
        for m in METRIC_NAMES:
            cells = [labels[m]]
            for name in self.per_class:
                v = self.per_class[name].get(m)
                cells.append("—" if v is None else f"{100 * v:.2f}")
            v = self.mean.get(m)
            cells.append("—" if v is None else f"{100 * v:.2f}")
            rows.append(cells)
        widths = [max(len(r[i]) for r in rows) for i in range(len(rows[0]))]
        return "\n".join(
            "  ".join(cell.ljust(w) for cell, w in zip(r, widths)).rstrip() for r in rows
        )


def report(per_class: dict) -> MetricsReport:
    """Add an unweighted mean row over classes with defined values."""
    if not per_class:
        raise ValueError("need at least one class row")
    means = {}
    undefined = {}
    for m in METRIC_NAMES:
        values = [row.get(m) for row in per_class.values()]
        defined = [v for v in values if v is not None]
        undefined[m] = len(values) - len(defined)
        means[m] = sum(defined) / len(defined) if defined else None
    return MetricsReport(dict(per_class), MetricsRow(**means), undefined)
