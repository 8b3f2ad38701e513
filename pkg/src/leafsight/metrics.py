"""Confusion matrices and precision / recall / F1 / accuracy reports.

Rows of a confusion matrix are the actual classes, columns the predicted
ones.  Every ratio with a zero denominator is reported as 0.
"""
import csv
import io
from dataclasses import dataclass

import numpy as np


class ConfusionMatrix:
    """Accumulator of (actual, predicted) pairs over a fixed class list."""

    def __init__(self, classes, counts=None):
        self.classes = list(classes)
        if len(set(self.classes)) != len(self.classes):
            raise ValueError("class labels must be unique")
        self._index = {c: i for i, c in enumerate(self.classes)}
        n = len(self.classes)
        if counts is None:
            self.counts = np.zeros((n, n), dtype=np.int64)
        else:
            counts = np.asarray(counts)
            if counts.shape != (n, n):
                raise ValueError(f"counts must be {n}x{n}, got {counts.shape}")
            if (counts < 0).any():
                raise ValueError("counts must be non-negative")
            self.counts = counts.copy()

    def _idx(self, label):
        try:
            return self._index[label]
        except KeyError:
            raise KeyError(f"unknown label {label!r}") from None

    def accumulate(self, actual, predicted):
        self.counts[self._idx(actual), self._idx(predicted)] += 1
        return self

    def update(self, actual, predicted):
        for a, p in zip(actual, predicted):
            self.accumulate(a, p)
        return self

    def merge(self, other):
        if other.classes != self.classes:
            raise ValueError("cannot merge matrices over different class lists")
        return ConfusionMatrix(self.classes, self.counts + other.counts)

    __add__ = merge

    @property
    def total(self):
        return self.counts.sum()

    def __eq__(self, other):
        return (isinstance(other, ConfusionMatrix) and self.classes == other.classes
                and np.array_equal(self.counts, other.counts))

    def __repr__(self):
        return f"ConfusionMatrix(classes={self.classes!r}, total={self.total})"

    def report(self):
        return report(self)


def confusion_matrix(actual, predicted, classes=None):
    if classes is None:
        classes = sorted(set(actual) | set(predicted))
    return ConfusionMatrix(classes).update(actual, predicted)


def _ratio(num, den):
    return np.divide(num, den, out=np.zeros_like(num, dtype=np.float64), where=den > 0)


@dataclass(frozen=True)
class MetricReport:
    classes: list
    precision: np.ndarray
    recall: np.ndarray
    f1: np.ndarray
    support: np.ndarray
    accuracy: float

    @property
    def macro_precision(self):
        return float(self.precision.mean())

    @property
    def macro_recall(self):
        return float(self.recall.mean())

    @property
    def macro_f1(self):
        return float(self.f1.mean())

    def to_text(self, digits=2):
        """Aligned plain-text table, values in percent."""
        width = max([len(str(c)) for c in self.classes] + [len("macro avg")])
        head = f"{'':<{width}}  {'precision':>9}  {'recall':>9}  {'f1':>9}  {'support':>9}"
        lines = [head]
        for c, p, r, f, s in zip(self.classes, self.precision, self.recall, self.f1, self.support):
            lines.append(f"{str(c):<{width}}  {100 * p:>9.{digits}f}  {100 * r:>9.{digits}f}"
                         f"  {100 * f:>9.{digits}f}  {_fmt_support(s):>9}")
        lines.append("")
        lines.append(f"{'macro avg':<{width}}  {100 * self.macro_precision:>9.{digits}f}"
                     f"  {100 * self.macro_recall:>9.{digits}f}  {100 * self.macro_f1:>9.{digits}f}"
                     f"  {_fmt_support(self.support.sum()):>9}")
        lines.append(f"{'accuracy':<{width}}  {'':>9}  {'':>9}  {100 * self.accuracy:>9.{digits}f}"
                     f"  {_fmt_support(self.support.sum()):>9}")
        return "\n".join(lines) + "\n"

    def to_csv(self):
        """``class,precision,recall,f1,support`` rows plus macro and accuracy rows."""
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["class", "precision", "recall", "f1", "support"])
        for c, p, r, f, s in zip(self.classes, self.precision, self.recall, self.f1, self.support):
            w.writerow([c, repr(float(p)), repr(float(r)), repr(float(f)), _fmt_support(s)])
        total = _fmt_support(self.support.sum())
        w.writerow(["macro_avg", repr(self.macro_precision), repr(self.macro_recall),
                    repr(self.macro_f1), total])
        w.writerow(["accuracy", "", "", repr(float(self.accuracy)), total])
        return buf.getvalue()


def _fmt_support(s):
    s = float(s)
    return str(int(s)) if s.is_integer() else repr(s)


def report(cm):
    counts = np.asarray(cm.counts, dtype=np.float64)
    total = counts.sum()
    if total <= 0:
        raise ValueError("confusion matrix is empty")
    tp = np.diag(counts)
    predicted = counts.sum(axis=0)
    actual = counts.sum(axis=1)
    precision = _ratio(tp, predicted)
    recall = _ratio(tp, actual)
    f1 = _ratio(2 * precision * recall, precision + recall)
    return MetricReport(
        classes=list(cm.classes),
        precision=precision,
        recall=recall,
        f1=f1,
        support=cm.counts.sum(axis=1),
        accuracy=float(tp.sum() / total),
    )
