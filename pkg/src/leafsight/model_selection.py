"""Stratified k-fold plans and cross-validated evaluation."""
import warnings
from dataclasses import dataclass, field

import numpy as np
from sklearn.base import clone
from sklearn.pipeline import make_pipeline
from sklearn.utils.multiclass import unique_labels

from .metrics import ConfusionMatrix
from .preprocessing import Standardizer, apply_standardizer, fit_standardizer


class FoldError(RuntimeError):
    def __init__(self, fold, exc):
        super().__init__(f"fold {fold}: {exc}")
        self.fold = fold


@dataclass(frozen=True)
class FoldPlan:
    k: int
    folds: list  # sorted test-row indices per fold
    warnings: list = field(default_factory=list)

    def splits(self):
        n = sum(len(f) for f in self.folds)
        for test in self.folds:
            train = np.setdiff1d(np.arange(n), test, assume_unique=True)
            yield train, test


def stratified_folds(y, k=10, rng_seed=0):
    """Shuffle each class with a seeded generator and deal its rows round-robin.

    Each class continues dealing where the previous one stopped, so fold
    sizes stay within one of each other as well.  A class with fewer than
    ``k`` rows only triggers a warning.
    """
    y = np.asarray(y)
    if k < 2:
        raise ValueError("k must be >= 2")
    if k > len(y):
        raise ValueError(f"cannot split {len(y)} rows into {k} folds")
    rng = np.random.default_rng(rng_seed)
    buckets = [[] for _ in range(k)]
    notes = []
    start = 0
    for c in unique_labels(y).tolist():
        rows = np.flatnonzero(y == c)
        if len(rows) < k:
            msg = f"class {c!r} has {len(rows)} rows, fewer than {k} folds"
            notes.append(msg)
            warnings.warn(msg, stacklevel=2)
        rows = rows[rng.permutation(len(rows))]
        for offset, r in enumerate(rows.tolist()):
            buckets[(start + offset) % k].append(r)
        start = (start + len(rows)) % k
    return FoldPlan(k, [np.array(sorted(b), dtype=np.intp) for b in buckets], notes)


@dataclass
class CVResult:
    matrices: list  # one ConfusionMatrix per fold

    def _per_fold(self, name):
        out = []
        for cm in self.matrices:
            r = cm.report()
            out.append(r.accuracy if name == "accuracy" else getattr(r, name))
        return np.array(out)

    @property
    def accuracies(self):
        return self._per_fold("accuracy")

    def summary(self):
        """Mean and population standard deviation of every per-fold metric."""
        out = {}
        for name in ("accuracy", "macro_precision", "macro_recall", "macro_f1"):
            v = self._per_fold(name)
            out[name] = (float(v.mean()), float(v.std()))
        return out

    @property
    def pooled(self):
        total = self.matrices[0]
        for cm in self.matrices[1:]:
            total = total + cm
        return total


def cross_validate(estimator, X, y, plan, standardize=True, classes=None):
    """Fit a fresh clone of ``estimator`` per fold and score the held-out rows.

    With ``standardize=True`` the estimator is preceded by a ``Standardizer``
    fitted on the training rows of each fold only.  ``"global"`` standardises
    all rows once up front (leaks test-fold statistics; kept for comparison
    with globally scaled experiments).  ``False`` leaves X untouched.
    """
    X = np.asarray(X, dtype=np.float64)
    y = np.asarray(y)
    if standardize == "global":
        X = apply_standardizer(X, fit_standardizer(X))
        standardize = False
    if sum(len(f) for f in plan.folds) != len(y):
        raise ValueError("fold plan does not cover the data")
    classes = unique_labels(y).tolist() if classes is None else list(classes)
    matrices = []
    for fold, (train, test) in enumerate(plan.splits()):
        model = clone(estimator)
        if standardize:
            model = make_pipeline(Standardizer(), model)
        try:
            model.fit(X[train], y[train])
            pred = model.predict(X[test])
        except Exception as exc:
            raise FoldError(fold, exc) from exc
        matrices.append(ConfusionMatrix(classes).update(y[test].tolist(), pred.tolist()))
    return CVResult(matrices)


def cv_accuracy(estimator, X, y, k=10, rng_seed=0, standardize=True):
    plan = stratified_folds(y, k, rng_seed)
    return float(cross_validate(estimator, X, y, plan, standardize).accuracies.mean())
