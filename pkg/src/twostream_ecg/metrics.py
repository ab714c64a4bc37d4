"""Confusion matrices and per-class / macro / overall classification metrics.

A 0/0 ratio is reported as ``None`` (undefined), never as 0, and undefined
values are left out of the macro averages.
"""
from __future__ import annotations

import csv
import io
import json
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .errors import EmptyInputError, LengthMismatchError


@dataclass(frozen=True)
class ConfusionMatrix:
    """Rows are ground truth, columns are predictions."""

    counts: np.ndarray
    class_names: tuple[str, ...]

    def __post_init__(self):
        c = np.asarray(self.counts)
        if c.ndim != 2 or c.shape[0] != c.shape[1]:
            raise ValueError(f"confusion counts must be square, got {c.shape}")
        if np.any(c < 0):
            raise ValueError("confusion counts must be non-negative")
        if len(self.class_names) != c.shape[0]:
            raise ValueError(f"{len(self.class_names)} class names for {c.shape[0]} classes")
        object.__setattr__(self, "counts", c.astype(np.int64))
        object.__setattr__(self, "class_names", tuple(str(n) for n in self.class_names))

    @property
    def n_classes(self) -> int:
        return self.counts.shape[0]

    @property
    def total(self) -> int:
        return int(self.counts.sum())

    def permuted(self, order: Sequence[int]) -> "ConfusionMatrix":
        order = list(order)
        return ConfusionMatrix(self.counts[np.ix_(order, order)], tuple(self.class_names[i] for i in order))

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["true\\pred", *self.class_names])
        for name, row in zip(self.class_names, self.counts):
            w.writerow([name, *row.tolist()])
        return buf.getvalue()


def confusion(true_labels, predicted, n_classes: int, class_names: Sequence[str] | None = None) -> ConfusionMatrix:
    t = np.asarray(true_labels, dtype=np.int64).ravel()
    p = np.asarray(predicted, dtype=np.int64).ravel()
    if t.size != p.size:
        raise LengthMismatchError(f"{t.size} true labels vs {p.size} predictions")
    for arr, what in ((t, "true"), (p, "predicted")):
        bad = np.flatnonzero((arr < 0) | (arr >= n_classes))
        if bad.size:
            raise IndexError(f"{what} label {arr[bad[0]]} at position {bad[0]} outside [0, {n_classes})")
    counts = np.zeros((n_classes, n_classes), dtype=np.int64)
    np.add.at(counts, (t, p), 1)
    names = tuple(class_names) if class_names is not None else tuple(str(i) for i in range(n_classes))
    return ConfusionMatrix(counts, names)


def _ratio(num, den):
    return None if den == 0 else num / den


def f1_score(ppv, sen):
    """Harmonic mean; undefined if either input is undefined or both are 0."""
    if ppv is None or sen is None or ppv + sen == 0:
        return None
    return 2 * ppv * sen / (ppv + sen)


@dataclass(frozen=True)
class ClassMetrics:
    name: str
    support: int
    ppv: float | None
    sen: float | None
    f1: float | None


def per_class(cm: ConfusionMatrix, k: int) -> tuple[float | None, float | None, float | None]:
    """(Ppv, Sen, F1) for class ``k``."""
    if not 0 <= k < cm.n_classes:
        raise IndexError(f"class {k} outside [0, {cm.n_classes})")
    tp = int(cm.counts[k, k])
    fn = int(cm.counts[k].sum()) - tp
    fp = int(cm.counts[:, k].sum()) - tp
    ppv = _ratio(tp, tp + fp)
    sen = _ratio(tp, tp + fn)
    return ppv, sen, f1_score(ppv, sen)


def _mean_defined(values):
    vals = [v for v in values if v is not None]
    return (sum(vals) / len(vals) if vals else None), len(values) - len(vals)


@dataclass(frozen=True)
class Overall:
    accuracy: float
    macro_ppv: float | None
    macro_sen: float | None
    macro_f1: float | None
    excluded: dict  # metric -> number of classes left out as undefined


def overall(cm: ConfusionMatrix) -> Overall:
    if cm.total == 0:
        raise EmptyInputError("confusion matrix is empty")
    rows = [per_class(cm, k) for k in range(cm.n_classes)]
    macro, excluded = {}, {}
    for i, key in enumerate(("ppv", "sen", "f1")):
        macro[key], excluded[key] = _mean_defined([r[i] for r in rows])
    acc = float(np.trace(cm.counts)) / cm.total
    return Overall(acc, macro["ppv"], macro["sen"], macro["f1"], excluded)


@dataclass(frozen=True)
class Report:
    classes: list[ClassMetrics]
    overall: Overall
    confusion: ConfusionMatrix

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["class", "support", "ppv", "sen", "f1", "acc"])
        fmt = lambda v: "" if v is None else repr(float(v))  # noqa: E731
        for c in self.classes:
            w.writerow([c.name, c.support, fmt(c.ppv), fmt(c.sen), fmt(c.f1), ""])
        o = self.overall
        w.writerow(["average", self.confusion.total, fmt(o.macro_ppv), fmt(o.macro_sen), fmt(o.macro_f1), ""])
        w.writerow(["overall", self.confusion.total, "", "", "", fmt(o.accuracy)])
        return buf.getvalue()

    def to_dict(self) -> dict:
        o = self.overall
        return {
            "n": self.confusion.total,
            "accuracy": o.accuracy,
            "macro": {"ppv": o.macro_ppv, "sen": o.macro_sen, "f1": o.macro_f1},
            "undefined_excluded": o.excluded,
            "classes": [
                {"name": c.name, "support": c.support, "ppv": c.ppv, "sen": c.sen, "f1": c.f1}
                for c in self.classes
            ],
            "confusion": self.confusion.counts.tolist(),
            "class_names": list(self.confusion.class_names),
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True) + "\n"


def report(cm: ConfusionMatrix) -> Report:
    classes = []
    for k, name in enumerate(cm.class_names):
        ppv, sen, f1 = per_class(cm, k)
        classes.append(ClassMetrics(name, int(cm.counts[k].sum()), ppv, sen, f1))
    return Report(classes, overall(cm), cm)
