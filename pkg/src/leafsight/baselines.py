"""Reference classifiers: k-nearest neighbours and Gaussian naive Bayes."""
from dataclasses import dataclass

import numpy as np
from sklearn.base import BaseEstimator, ClassifierMixin
from sklearn.utils.multiclass import unique_labels
from sklearn.utils.validation import check_array, check_is_fitted, check_X_y


def knn_predict(X_train, y_train, x, k=5, classes=None):
    """Majority label among the ``k`` Euclidean nearest training rows.

    Equal distances keep training-row order.  Vote ties go to the class whose
    members among the neighbours are closer on average, then to the earlier
    class in ``classes`` (sorted labels by default).
    """
    X_train = np.asarray(X_train, dtype=np.float64)
    y_train = np.asarray(y_train)
    x = np.asarray(x, dtype=np.float64)
    n = X_train.shape[0]
    if not 1 <= k <= n:
        raise ValueError(f"k must be in [1, {n}], got {k}")
    if x.shape != (X_train.shape[1],):
        raise ValueError("query width does not match the training data")
    classes = list(unique_labels(y_train)) if classes is None else list(classes)
    d = np.sqrt(((X_train - x) ** 2).sum(axis=1))
    nearest = np.argsort(d, kind="stable")[:k]
    best = None
    for rank, c in enumerate(classes):
        hit = nearest[y_train[nearest] == c]
        if len(hit) == 0:
            continue
        key = (len(hit), -d[hit].mean(), -rank)
        if best is None or key > best[0]:
            best = (key, c)
    return best[1]


class KNNClassifier(ClassifierMixin, BaseEstimator):
    def __init__(self, n_neighbors=5):
        self.n_neighbors = n_neighbors

    def fit(self, X, y):
        X, y = check_X_y(X, y)
        if not 1 <= self.n_neighbors <= X.shape[0]:
            raise ValueError("n_neighbors must be between 1 and the number of rows")
        self.classes_ = unique_labels(y)
        self.X_ = X
        self.y_ = y
        self.n_features_in_ = X.shape[1]
        return self

    def predict(self, X):
        check_is_fitted(self, ["X_", "y_"])
        X = check_array(X)
        if X.shape[1] != self.n_features_in_:
            raise ValueError(f"X has {X.shape[1]} features, expected {self.n_features_in_}")
        out = [knn_predict(self.X_, self.y_, x, self.n_neighbors, self.classes_) for x in X]
        return np.asarray(out, dtype=self.classes_.dtype)


@dataclass(frozen=True)
class GnbModel:
    classes: list
    priors: np.ndarray
    means: np.ndarray  # (n_classes, n_features)
    variances: np.ndarray


def gnb_train(X, y):
    """Maximum-likelihood class priors, means and variances.

    Variances are floored at ``1e-9 * (overall feature variance + 1)`` so a
    feature that is constant within a class stays usable.
    """
    X = np.asarray(X, dtype=np.float64)
    y = np.asarray(y)
    classes = unique_labels(y).tolist()
    floor = 1e-9 * (X.var(axis=0) + 1.0)
    priors, means, variances = [], [], []
    for c in classes:
        rows = X[y == c]
        if rows.shape[0] < 2:
            raise ValueError(f"class {c!r} needs at least 2 rows, has {rows.shape[0]}")
        priors.append(rows.shape[0] / X.shape[0])
        means.append(rows.mean(axis=0))
        variances.append(np.maximum(rows.var(axis=0), floor))
    return GnbModel(classes, np.array(priors), np.array(means), np.array(variances))


def gnb_log_joint(model, X):
    X = np.atleast_2d(np.asarray(X, dtype=np.float64))
    out = np.empty((X.shape[0], len(model.classes)))
    for k in range(len(model.classes)):
        var = model.variances[k]
        ll = -0.5 * (np.log(2.0 * np.pi * var) + (X - model.means[k]) ** 2 / var)
        out[:, k] = np.log(model.priors[k]) + ll.sum(axis=1)
    return out


def gnb_predict(model, x):
    """Most probable label and the normalised posterior over ``model.classes``."""
    lj = gnb_log_joint(model, x)[0]
    post = np.exp(lj - lj.max())
    post /= post.sum()
    return model.classes[int(np.argmax(post))], post


class GaussianNaiveBayes(ClassifierMixin, BaseEstimator):
    def fit(self, X, y):
        X, y = check_X_y(X, y)
        self.model_ = gnb_train(X, y)
        self.classes_ = np.asarray(self.model_.classes)
        self.n_features_in_ = X.shape[1]
        return self

    def predict_proba(self, X):
        check_is_fitted(self, "model_")
        X = check_array(X)
        lj = gnb_log_joint(self.model_, X)
        post = np.exp(lj - lj.max(axis=1, keepdims=True))
        return post / post.sum(axis=1, keepdims=True)

    def predict(self, X):
        return self.classes_[np.argmax(self.predict_proba(X), axis=1)]
