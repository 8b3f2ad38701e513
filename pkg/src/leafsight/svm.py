"""Kernel support vector machines trained with sequential minimal optimisation,
and their one-vs-one multi-class combination."""
from dataclasses import dataclass, field, replace
from itertools import combinations

import numpy as np
from sklearn.base import BaseEstimator, ClassifierMixin
from sklearn.utils.multiclass import unique_labels
from sklearn.utils.validation import check_array, check_is_fitted, check_X_y

KERNEL_KINDS = ("linear", "polynomial", "gaussian")


class ConvergenceError(RuntimeError):
    def __init__(self, message, worst_violation=None, pair=None):
        super().__init__(message)
        self.worst_violation = worst_violation
        self.pair = pair


@dataclass(frozen=True)
class KernelSpec:
    """``linear``: <x, y>; ``polynomial``: (1 + <x, y>)**degree;
    ``gaussian``: exp(-|x - y|**2 / (2 sigma**2)).

    A gaussian spec with ``sigma=None`` is resolved from the training data.
    """

    kind: str = "linear"
    degree: int = 3
    sigma: float = None

    def __post_init__(self):
        if self.kind not in KERNEL_KINDS:
            raise ValueError(f"unknown kernel kind {self.kind!r}")
        if self.degree < 1:
            raise ValueError("degree must be >= 1")
        if self.sigma is not None and not self.sigma > 0:
            raise ValueError("sigma must be > 0")

    @classmethod
    def from_name(cls, name, degree=None, sigma=None):
        """Map the names linear / quadratic / cubic / gaussian / polynomial to specs."""
        if name == "linear":
            return cls("linear")
        if name == "quadratic":
            return cls("polynomial", degree=2)
        if name == "cubic":
            return cls("polynomial", degree=3)
        if name == "polynomial":
            return cls("polynomial", degree=3 if degree is None else degree)
        if name == "gaussian":
            return cls("gaussian", sigma=sigma)
        raise ValueError(f"unknown kernel {name!r}")

    def to_dict(self):
        return {"kind": self.kind, "degree": self.degree, "sigma": self.sigma}

    @classmethod
    def from_dict(cls, d):
        return cls(d["kind"], int(d["degree"]), d["sigma"])


def kernel_eval(spec, x, y):
    x = np.asarray(x, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    if x.shape != y.shape:
        raise ValueError(f"vector lengths differ: {x.shape} vs {y.shape}")
    if spec.kind == "linear":
        return float(np.dot(x, y))
    if spec.kind == "polynomial":
        return float((1.0 + np.dot(x, y)) ** spec.degree)
    if spec.sigma is None:
        raise ValueError("gaussian kernel needs a resolved sigma")
    return float(np.exp(-np.sum((x - y) ** 2) / (2.0 * spec.sigma ** 2)))


def _sq_distances(X, Y, chunk=256):
    out = np.empty((X.shape[0], Y.shape[0]))
    for s in range(0, X.shape[0], chunk):
        diff = X[s:s + chunk, None, :] - Y[None, :, :]
        out[s:s + chunk] = np.einsum("ijk,ijk->ij", diff, diff)
    return out


def kernel_matrix(spec, X, Y):
    X = np.asarray(X, dtype=np.float64)
    Y = np.asarray(Y, dtype=np.float64)
    if X.shape[1] != Y.shape[1]:
        raise ValueError(f"feature widths differ: {X.shape[1]} vs {Y.shape[1]}")
    if spec.kind == "linear":
        return X @ Y.T
    if spec.kind == "polynomial":
        return (1.0 + X @ Y.T) ** spec.degree
    if spec.sigma is None:
        raise ValueError("gaussian kernel needs a resolved sigma")
    return np.exp(-_sq_distances(X, Y) / (2.0 * spec.sigma ** 2))


def median_pairwise_distance(X, max_rows=500, rng_seed=0):
    """Median Euclidean distance between distinct rows of a seeded subsample."""
    X = np.asarray(X, dtype=np.float64)
    if X.shape[0] > max_rows:
        idx = np.sort(np.random.default_rng(rng_seed).choice(X.shape[0], max_rows, replace=False))
        X = X[idx]
    if X.shape[0] < 2:
        return 1.0
    d = np.sqrt(_sq_distances(X, X)[np.triu_indices(X.shape[0], k=1)])
    med = float(np.median(d))
    return med if med > 0 else 1.0


def resolve_kernel(spec, X, rng_seed=0):
    if spec.kind == "gaussian" and spec.sigma is None:
        return replace(spec, sigma=median_pairwise_distance(X, rng_seed=rng_seed))
    return spec


# -- binary SVM -------------------------------------------------------------

@dataclass(frozen=True)
class BinarySvmModel:
    """Decision function ``f(x) = sum_i dual_coefs[i] K(sv_i, x) + bias``,
    with ``dual_coefs = alpha * y``; class +1 when ``f(x) >= 0``."""

    support_vectors: np.ndarray
    dual_coefs: np.ndarray
    bias: float
    kernel: KernelSpec
    C: float
    n_iter: int = 0
    kkt_violation: float = 0.0
    alphas: np.ndarray = field(default=None, repr=False, compare=False)

    @property
    def n_features(self):
        return self.support_vectors.shape[1]

    def decision(self, X):
        X = np.asarray(X, dtype=np.float64)
        if X.ndim == 1:
            X = X[None, :]
        if X.shape[1] != self.n_features:
            raise ValueError(f"expected {self.n_features} features, got {X.shape[1]}")
        if len(self.dual_coefs) == 0:
            return np.full(X.shape[0], self.bias)
        return kernel_matrix(self.kernel, X, self.support_vectors) @ self.dual_coefs + self.bias

    def to_dict(self):
        return {
            "support_vectors": self.support_vectors.tolist(),
            "dual_coefs": self.dual_coefs.tolist(),
            "bias": self.bias,
            "kernel": self.kernel.to_dict(),
            "C": self.C,
        }

    @classmethod
    def from_dict(cls, d, n_features=None):
        sv = np.asarray(d["support_vectors"], dtype=np.float64)
        if sv.size == 0:
            sv = sv.reshape(0, n_features or 0)
        return cls(sv, np.asarray(d["dual_coefs"], dtype=np.float64), float(d["bias"]),
                   KernelSpec.from_dict(d["kernel"]), float(d["C"]))


def svm_decision(model, x):
    """Signed score of a single vector."""
    x = np.asarray(x, dtype=np.float64)
    if x.ndim != 1:
        raise ValueError("expected a single feature vector")
    return float(model.decision(x[None, :])[0])


def kkt_violation(alpha, margins, C, tol=0.0):
    """Largest amount by which any multiplier breaks the KKT conditions.

    ``margins`` are ``y_i f(x_i)``.  Returns 0 when every condition holds
    within ``tol``.
    """
    alpha = np.asarray(alpha)
    m = np.asarray(margins)
    v = np.zeros_like(m)
    at_zero = alpha <= 0
    at_c = alpha >= C
    free = ~at_zero & ~at_c
    v[at_zero] = np.maximum(1.0 - m[at_zero], 0.0)
    v[at_c] = np.maximum(m[at_c] - 1.0, 0.0)
    v[free] = np.abs(m[free] - 1.0)
    return float(np.max(v - tol, initial=0.0).clip(min=0.0))


def smo_train(X, y, spec=None, C=1.0, tol=1e-3, rng_seed=0, max_iter=100_000):
    """Train a binary soft-margin SVM on labels in {-1, +1} by SMO.

    Each step optimises the maximally violating pair of multipliers
    analytically.  Training stops once the largest KKT violation gap drops
    below ``tol`` and raises ``ConvergenceError`` after ``max_iter`` pair
    updates.  ``rng_seed`` fixes the order in which equally violating
    multipliers are preferred (and the gaussian bandwidth subsample).
    """
    X = np.asarray(X, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    if X.ndim != 2 or X.shape[0] != y.shape[0]:
        raise ValueError("X must be 2-D with one label per row")
    if not np.all(np.isin(y, (-1.0, 1.0))):
        raise ValueError("labels must be -1 or +1")
    if not ((y > 0).any() and (y < 0).any()):
        raise ValueError("both labels must be present")
    if C <= 0:
        raise ValueError("C must be > 0")
    spec = resolve_kernel(spec or KernelSpec(), X, rng_seed)

    n = X.shape[0]
    order = np.random.default_rng(rng_seed).permutation(n)
    Xp, yp = X[order], y[order]
    K = kernel_matrix(spec, Xp, Xp)
    diag = np.diag(K).copy()
    pos = yp > 0
    alpha = np.zeros(n)
    grad = -np.ones(n)  # gradient of 1/2 a'Qa - e'a, Q = yy'K
    minus_yg = yp.copy()

    it = 0
    while True:
        up = np.where(pos, alpha < C, alpha > 0)
        low = np.where(pos, alpha > 0, alpha < C)
        vu = np.where(up, minus_yg, -np.inf)
        vl = np.where(low, minus_yg, np.inf)
        i = int(np.argmax(vu))
        gap = vu[i] - vl.min()
        if gap <= tol:
            break
        # partner by second-order gain among multipliers violating with i
        b_ij = vu[i] - vl
        a_ij = diag[i] + diag - 2.0 * K[i]
        a_ij[a_ij <= 0] = 1e-12
        gain = np.where(b_ij > 0, b_ij * b_ij / a_ij, -np.inf)
        j = int(np.argmax(gain))
        if it >= max_iter:
            raise ConvergenceError(
                f"SMO did not converge in {max_iter} updates (KKT gap {gap:.3g})",
                worst_violation=float(gap))
        it += 1
        t = b_ij[j] / a_ij[j]
        t = min(t, C - alpha[i] if pos[i] else alpha[i])
        t = min(t, alpha[j] if pos[j] else C - alpha[j])
        old_i, old_j = alpha[i], alpha[j]
        ai, aj = old_i + yp[i] * t, old_j - yp[j] * t
        # snap to the box so round-off cannot leave 1e-17 residues
        alpha[i] = 0.0 if ai < 1e-12 * C else (C if ai > C * (1 - 1e-12) else ai)
        alpha[j] = 0.0 if aj < 1e-12 * C else (C if aj > C * (1 - 1e-12) else aj)
        grad += yp * (yp[i] * (alpha[i] - old_i) * K[i] + yp[j] * (alpha[j] - old_j) * K[j])
        minus_yg = -yp * grad

    yg = yp * grad
    free = (alpha > 0) & (alpha < C)
    if free.any():
        b = -float(yg[free].mean())
    else:
        up = np.where(pos, alpha < C, alpha > 0)
        low = np.where(pos, alpha > 0, alpha < C)
        hi = np.max(-yg[up], initial=-np.inf)
        lo = np.min(-yg[low], initial=np.inf)
        b = float((hi + lo) / 2.0) if np.isfinite(hi) and np.isfinite(lo) else 0.0

    inv = np.empty(n, dtype=np.intp)
    inv[order] = np.arange(n)
    alpha = alpha[inv]
    margins = y * (kernel_matrix(spec, X, X) @ (alpha * y) + b)
    sv = alpha > 0
    return BinarySvmModel(
        support_vectors=X[sv].copy(),
        dual_coefs=(alpha * y)[sv],
        bias=b,
        kernel=spec,
        C=float(C),
        n_iter=it,
        kkt_violation=kkt_violation(alpha, margins, C),
        alphas=alpha,
    )


# -- one-vs-one -------------------------------------------------------------

@dataclass(frozen=True)
class OvoSvmModel:
    """One binary machine per unordered class pair ``(a, b)``, ``a < b`` in
    class order; a non-negative score is a vote for ``a``."""

    classes: list
    pairs: list  # [((a, b), BinarySvmModel)]
    kernel: KernelSpec
    C: float
    tie_rule: str = "votes>abs_score_sum>class_order"

    def decision_matrix(self, X):
        X = np.asarray(X, dtype=np.float64)
        if X.ndim == 1:
            X = X[None, :]
        return np.column_stack([m.decision(X) for _, m in self.pairs])

    def to_dict(self):
        return {
            "classes": list(self.classes),
            "kernel": self.kernel.to_dict(),
            "C": self.C,
            "pairs": [dict(a=a, b=b, **m.to_dict()) for (a, b), m in self.pairs],
        }

    @classmethod
    def from_dict(cls, d, n_features=None):
        pairs = [((int(p["a"]), int(p["b"])), BinarySvmModel.from_dict(p, n_features))
                 for p in d["pairs"]]
        return cls(list(d["classes"]), pairs, KernelSpec.from_dict(d["kernel"]), float(d["C"]))


def ovo_train(X, y, spec=None, C=1.0, tol=1e-3, rng_seed=0, max_iter=100_000):
    X = np.asarray(X, dtype=np.float64)
    y = np.asarray(y)
    classes = unique_labels(y).tolist()
    if len(classes) < 2:
        raise ValueError("at least two classes are required")
    spec = resolve_kernel(spec or KernelSpec(), X, rng_seed)
    pairs = []
    for k, (a, b) in enumerate(combinations(range(len(classes)), 2)):
        rows = (y == classes[a]) | (y == classes[b])
        yy = np.where(y[rows] == classes[a], 1.0, -1.0)
        try:
            m = smo_train(X[rows], yy, spec, C, tol, rng_seed + k, max_iter)
        except ConvergenceError as exc:
            raise ConvergenceError(f"pair ({classes[a]!r}, {classes[b]!r}): {exc}",
                                   exc.worst_violation, (classes[a], classes[b])) from exc
        pairs.append(((a, b), m))
    return OvoSvmModel(classes, pairs, spec, float(C))


def vote(scores, pairs, n_classes):
    """Resolve pairwise scores into (winner index, votes, confidence).

    Every pair votes once.  Ties on the vote count go to the class with the
    larger summed |score| over the pairs it won, then to the earlier class.
    """
    votes = np.zeros(n_classes, dtype=np.int64)
    conf = np.zeros(n_classes)
    for s, (a, b) in zip(scores, pairs):
        w = a if s >= 0 else b
        votes[w] += 1
        conf[w] += abs(s)
    best = max(range(n_classes), key=lambda c: (votes[c], conf[c], -c))
    return best, votes, conf


def ovo_predict(model, x):
    """Label and vote vector for a single feature vector."""
    x = np.asarray(x, dtype=np.float64)
    scores = model.decision_matrix(x[None, :])[0]
    best, votes, _ = vote(scores, [p for p, _ in model.pairs], len(model.classes))
    return model.classes[best], votes


class OneVsOneSVC(ClassifierMixin, BaseEstimator):
    """Multi-class kernel SVM: one SMO-trained machine per class pair, majority vote.

    Parameters
    ----------
    kernel : {"linear", "quadratic", "cubic", "polynomial", "gaussian"}
    C : float
        Box constraint.
    degree : int, optional
        Degree for ``kernel="polynomial"``.
    sigma : float, optional
        Gaussian bandwidth; by default the median pairwise distance of a
        seeded subsample of the training rows.
    tol, max_iter :
        SMO stopping controls.
    random_state : int
        Seeds partner selection and bandwidth subsampling.
    """

    def __init__(self, kernel="cubic", C=1.0, degree=None, sigma=None, tol=1e-3,
                 max_iter=100_000, random_state=0):
        self.kernel = kernel
        self.C = C
        self.degree = degree
        self.sigma = sigma
        self.tol = tol
        self.max_iter = max_iter
        self.random_state = random_state

    def fit(self, X, y):
        X, y = check_X_y(X, y)
        self.classes_ = unique_labels(y)
        self.n_features_in_ = X.shape[1]
        spec = KernelSpec.from_name(self.kernel, self.degree, self.sigma)
        seed = 0 if self.random_state is None else int(self.random_state)
        if len(self.classes_) == 1:
            self.model_ = OvoSvmModel(list(self.classes_), [], spec, float(self.C))
            return self
        self.model_ = ovo_train(X, y, spec, self.C, self.tol, seed, self.max_iter)
        return self

    def _scores(self, X):
        check_is_fitted(self, "model_")
        X = check_array(X)
        if X.shape[1] != self.n_features_in_:
            raise ValueError(f"X has {X.shape[1]} features, expected {self.n_features_in_}")
        if not self.model_.pairs:
            return np.zeros((X.shape[0], 0))
        return self.model_.decision_matrix(X)

    def votes(self, X):
        scores = self._scores(X)
        pairs = [p for p, _ in self.model_.pairs]
        n = len(self.classes_)
        return np.array([vote(s, pairs, n)[1] for s in scores]).reshape(len(scores), n)

    def decision_function(self, X):
        """Pairwise scores, one column per class pair in class order."""
        return self._scores(X)

    def predict(self, X):
        scores = self._scores(X)
        pairs = [p for p, _ in self.model_.pairs]
        n = len(self.classes_)
        idx = [vote(s, pairs, n)[0] for s in scores]
        return self.classes_[np.asarray(idx, dtype=np.intp)]


def n_pair_models(n_classes):
    return n_classes * (n_classes - 1) // 2

