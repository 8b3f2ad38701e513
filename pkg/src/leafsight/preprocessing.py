"""Zero-mean / unit-variance feature scaling."""
from dataclasses import dataclass

import numpy as np
from sklearn.base import BaseEstimator, TransformerMixin
from sklearn.utils.validation import check_array, check_is_fitted


@dataclass(frozen=True)
class StandardizationParams:
    means: np.ndarray
    sigmas: np.ndarray  # population standard deviations

    def to_dict(self):
        return {"means": self.means.tolist(), "sigmas": self.sigmas.tolist()}

    @classmethod
    def from_dict(cls, d):
        return cls(np.asarray(d["means"], dtype=np.float64), np.asarray(d["sigmas"], dtype=np.float64))


def fit_standardizer(X):
    X = check_array(X, dtype=np.float64)
    if X.shape[0] < 2:
        raise ValueError("at least two rows are needed to standardise")
    means = X.mean(axis=0)
    sigmas = np.sqrt(((X - means) ** 2).mean(axis=0))
    return StandardizationParams(means, sigmas)


def apply_standardizer(X, params):
    """``(x - mean) / sigma`` per column; zero-variance columns become 0."""
    X = check_array(X, dtype=np.float64)
    if X.shape[1] != params.means.shape[0]:
        raise ValueError(f"X has {X.shape[1]} columns, parameters cover {params.means.shape[0]}")
    safe = np.where(params.sigmas > 0, params.sigmas, 1.0)
    return np.where(params.sigmas > 0, (X - params.means) / safe, 0.0)


class Standardizer(TransformerMixin, BaseEstimator):
    """Column standardisation with population statistics."""

    def fit(self, X, y=None):
        self.params_ = fit_standardizer(X)
        self.n_features_in_ = self.params_.means.shape[0]
        return self

    def transform(self, X):
        check_is_fitted(self, "params_")
        return apply_standardizer(X, self.params_)
