"""Feature ranking (ReliefF) and greedy forward selection."""
from dataclasses import dataclass

import numpy as np
from sklearn.base import BaseEstimator
from sklearn.feature_selection import SelectorMixin
from sklearn.utils.multiclass import unique_labels
from sklearn.utils.validation import check_is_fitted, check_X_y

from .model_selection import cross_validate, stratified_folds
from .svm import OneVsOneSVC


class SelectionError(RuntimeError):
    def __init__(self, candidate, exc):
        super().__init__(f"evaluating feature set {candidate}: {exc}")
        self.candidate = candidate


@dataclass(frozen=True)
class ReliefFWeights:
    weights: np.ndarray
    ranking: np.ndarray  # feature indices by descending weight


@dataclass(frozen=True)
class SelectionTrace:
    steps: list  # [(feature index, cv accuracy after adding it)]
    feature_names: list = None

    @property
    def selected(self):
        return [f for f, _ in self.steps]

    @property
    def accuracies(self):
        return [a for _, a in self.steps]

    def rows(self):
        names = self.feature_names
        return [(k + 1, names[f] if names else f, acc) for k, (f, acc) in enumerate(self.steps)]


def _k_nearest(dist, rows, k):
    # stable on equal distances: earlier rows first
    return rows[np.argsort(dist[rows], kind="stable")[:k]]


def relieff_rank(X, y, k_neighbors=10, n_samples=None, rng_seed=0):
    """Multi-class ReliefF weights.

    Per-feature differences are scaled by the feature's range, and neighbours
    are found by Euclidean distance on the range-scaled features.  With
    ``n_samples=None`` every row is used once as the reference instance;
    otherwise ``n_samples`` distinct rows are drawn with a seeded generator.
    """
    X = np.asarray(X, dtype=np.float64)
    y = np.asarray(y)
    n, d = X.shape
    classes = unique_labels(y).tolist()
    counts = {c: int(np.sum(y == c)) for c in classes}
    for c in classes:
        if counts[c] < k_neighbors + 1:
            raise ValueError(f"class {c!r} has {counts[c]} rows; ReliefF with "
                             f"k_neighbors={k_neighbors} needs at least {k_neighbors + 1}")
    lo, span = X.min(axis=0), np.ptp(X, axis=0)
    Xn = np.where(span > 0, (X - lo) / np.where(span > 0, span, 1.0), 0.0)
    prior = {c: counts[c] / n for c in classes}
    members = {c: np.flatnonzero(y == c) for c in classes}

    if n_samples is None:
        refs = np.arange(n)
    else:
        if not 1 <= n_samples <= n:
            raise ValueError(f"n_samples must be in [1, {n}]")
        refs = np.random.default_rng(rng_seed).choice(n, n_samples, replace=False)
    m = len(refs)
    k = k_neighbors
    w = np.zeros(d)
    for r in refs.tolist():
        dist = np.sqrt(((Xn - Xn[r]) ** 2).sum(axis=1))
        c = y[r]
        same = members[c][members[c] != r]
        hits = _k_nearest(dist, same, k)
        w -= np.abs(Xn[hits] - Xn[r]).sum(axis=0) / (m * k)
        for other in classes:
            if other == c:
                continue
            misses = _k_nearest(dist, members[other], k)
            scale = prior[other] / (1.0 - prior[c])
            w += scale * np.abs(Xn[misses] - Xn[r]).sum(axis=0) / (m * len(misses))
    ranking = np.argsort(-w, kind="stable")
    return ReliefFWeights(w, ranking)


def select_positive(weights):
    """Indices of features with strictly positive weight, in rank order."""
    return [int(f) for f in weights.ranking if weights.weights[f] > 0]


def default_evaluator(kernel="cubic", C=1.0, folds=10, rng_seed=0, standardize=True):
    """CV accuracy of a one-vs-one SVM, as a function of (X, y)."""
    def evaluate(X, y):
        plan = stratified_folds(y, folds, rng_seed)
        est = OneVsOneSVC(kernel=kernel, C=C, random_state=rng_seed)
        return float(cross_validate(est, X, y, plan, standardize).accuracies.mean())
    return evaluate


def forward_select(X, y, evaluator=None, tie_epsilon=1e-6, max_features=None, feature_names=None):
    """Greedy forward selection.

    Every step scores each unused feature appended to the current set and
    keeps the best one (lowest index on ties) only if it beats the current
    accuracy by more than ``tie_epsilon``.
    """
    X = np.asarray(X, dtype=np.float64)
    d = X.shape[1]
    if d < 1:
        raise ValueError("need at least one feature")
    evaluator = evaluator or default_evaluator()
    limit = d if max_features is None else min(max_features, d)
    chosen, steps = [], []
    incumbent = -np.inf
    while len(chosen) < limit:
        best_f, best_acc = None, -np.inf
        for f in range(d):
            if f in chosen:
                continue
            cols = chosen + [f]
            try:
                acc = evaluator(X[:, cols], y)
            except Exception as exc:
                raise SelectionError(cols, exc) from exc
            if acc > best_acc:
                best_f, best_acc = f, acc
        if not best_acc > incumbent + tie_epsilon:
            break
        chosen.append(best_f)
        steps.append((best_f, float(best_acc)))
        incumbent = best_acc
    return SelectionTrace(steps, list(feature_names) if feature_names is not None else None)


class ReliefFSelector(SelectorMixin, BaseEstimator):
    """Keep the features to which ReliefF assigns a positive weight."""

    def __init__(self, k_neighbors=10, n_samples=None, random_state=0):
        self.k_neighbors = k_neighbors
        self.n_samples = n_samples
        self.random_state = random_state

    def fit(self, X, y):
        X, y = check_X_y(X, y)
        res = relieff_rank(X, y, self.k_neighbors, self.n_samples, self.random_state or 0)
        self.weights_ = res.weights
        self.ranking_ = res.ranking
        self.n_features_in_ = X.shape[1]
        return self

    def _get_support_mask(self):
        check_is_fitted(self, "weights_")
        return self.weights_ > 0


class ForwardSelector(SelectorMixin, BaseEstimator):
    """Forward selection scored by cross-validated accuracy of ``estimator``
    (a cubic one-vs-one SVM by default)."""

    def __init__(self, estimator=None, folds=10, tie_epsilon=1e-6, max_features=None,
                 standardize=True, random_state=0):
        self.estimator = estimator
        self.folds = folds
        self.tie_epsilon = tie_epsilon
        self.max_features = max_features
        self.standardize = standardize
        self.random_state = random_state

    def fit(self, X, y):
        X, y = check_X_y(X, y)
        seed = self.random_state or 0
        est = self.estimator if self.estimator is not None else OneVsOneSVC("cubic", random_state=seed)

        def evaluate(Xs, ys):
            plan = stratified_folds(ys, self.folds, seed)
            return float(cross_validate(est, Xs, ys, plan, self.standardize).accuracies.mean())

        self.trace_ = forward_select(X, y, evaluate, self.tie_epsilon, self.max_features)
        self.selected_ = self.trace_.selected
        self.n_features_in_ = X.shape[1]
        return self

    def _get_support_mask(self):
        check_is_fitted(self, "trace_")
        mask = np.zeros(self.n_features_in_, dtype=bool)
        mask[self.selected_] = True
        return mask
