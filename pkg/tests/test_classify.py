import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays
from sklearn.base import BaseEstimator, ClassifierMixin, clone

from leafsight.baselines import (
    GaussianNaiveBayes,
    KNNClassifier,
    gnb_predict,
    gnb_train,
    knn_predict,
)
from leafsight.model_selection import (
    FoldError,
    cross_validate,
    cv_accuracy,
    stratified_folds,
)
from leafsight.svm import (
    BinarySvmModel,
    ConvergenceError,
    KernelSpec,
    OneVsOneSVC,
    OvoSvmModel,
    kernel_eval,
    kernel_matrix,
    kkt_violation,
    median_pairwise_distance,
    n_pair_models,
    ovo_predict,
    ovo_train,
    smo_train,
    svm_decision,
    vote,
)

vec3 = arrays(np.float64, 3, elements=st.floats(-5, 5))


def blobs(rng, centers, n_per, spread=0.3):
    X = np.vstack([rng.normal(c, spread, (n_per, len(c))) for c in centers])
    y = np.repeat(np.arange(len(centers)), n_per)
    return X, y


def separable_pair(rng, n=200):
    # two clouds whose gap along (1, 1)/sqrt(2) is at least 2
    X = rng.uniform(-3, 3, (4 * n, 2))
    s = X.sum(axis=1) / math.sqrt(2)
    keep = np.abs(s) >= 1
    X, s = X[keep][:n], s[keep][:n]
    return X, np.where(s > 0, 1.0, -1.0)


class TestKernels:
    def test_examples(self):
        assert kernel_eval(KernelSpec("linear"), (1, 2), (3, 4)) == 11
        assert kernel_eval(KernelSpec("polynomial", 3), (1, 2), (3, 4)) == 1728
        assert kernel_eval(KernelSpec("gaussian", sigma=0.7), (1, 2), (1, 2)) == 1

    def test_names(self):
        assert KernelSpec.from_name("cubic") == KernelSpec("polynomial", 3)
        assert KernelSpec.from_name("quadratic").degree == 2
        with pytest.raises(ValueError):
            KernelSpec.from_name("sigmoid")

    @pytest.mark.parametrize("bad", [dict(kind="rbf"), dict(degree=0), dict(kind="gaussian", sigma=0.0)])
    def test_invalid_spec(self, bad):
        with pytest.raises(ValueError):
            KernelSpec(**bad)

    def test_length_mismatch(self):
        with pytest.raises(ValueError):
            kernel_eval(KernelSpec(), (1, 2), (1, 2, 3))

    def test_unresolved_gaussian(self):
        with pytest.raises(ValueError):
            kernel_eval(KernelSpec("gaussian"), (1,), (2,))

    @given(vec3, vec3)
    def test_symmetry_and_ranges(self, x, y):
        for spec in (KernelSpec("linear"), KernelSpec("polynomial", 3), KernelSpec("gaussian", sigma=1.5)):
            assert kernel_eval(spec, x, y) == kernel_eval(spec, y, x)
        g = kernel_eval(KernelSpec("gaussian", sigma=1.5), x, y)
        assert 0 <= g <= 1  # underflows to 0 only for very distant points
        c = kernel_eval(KernelSpec("polynomial", 3), x, y)
        base = 1 + float(np.dot(x, y))
        assert c == 0 or np.sign(c) == np.sign(base)

    def test_matrix_matches_pointwise(self, rng):
        X, Y = rng.normal(size=(5, 3)), rng.normal(size=(4, 3))
        for spec in (KernelSpec("linear"), KernelSpec("polynomial", 2), KernelSpec("gaussian", sigma=0.8)):
            K = kernel_matrix(spec, X, Y)
            want = [[kernel_eval(spec, x, y) for y in Y] for x in X]
            assert np.allclose(K, want, rtol=1e-12, atol=0)

    def test_median_distance(self):
        X = np.array([[0.0], [1.0], [3.0]])
        assert median_pairwise_distance(X) == 2.0
        assert median_pairwise_distance(np.zeros((3, 2))) == 1.0


class TestSmo:
    def test_symmetric_pair(self):
        m = smo_train([[-1.0], [1.0]], [-1, 1], KernelSpec("linear"), C=10)
        assert svm_decision(m, [-1.0]) < 0 < svm_decision(m, [1.0])
        assert len(m.support_vectors) == 2
        assert abs(svm_decision(m, [1.0]) - 1) <= 1e-3
        assert abs(svm_decision(m, [0.0])) <= 1e-3

    def test_xor(self):
        X = np.array([[0, 0], [1, 1], [0, 1], [1, 0]], float)
        y = np.array([1, 1, -1, -1.0])
        m = smo_train(X, y, KernelSpec("gaussian", sigma=0.5), C=10)
        f = m.decision(X)
        # direct evaluation of sum a_i y_i K(x_i, x) + b
        direct = [sum(a * kernel_eval(m.kernel, sv, x) for a, sv in zip(m.dual_coefs, m.support_vectors))
                  + m.bias for x in X]
        assert np.allclose(f, direct, atol=1e-12)
        assert np.all(np.sign(f) == y)

    def test_separable_blobs(self, rng):
        X, y = separable_pair(rng)
        m = smo_train(X, y, KernelSpec("linear"), C=1.0)
        assert np.all(np.sign(m.decision(X)) == y)
        assert abs(m.alphas @ y) <= 1e-8
        assert np.all((m.alphas >= 0) & (m.alphas <= m.C))

    @pytest.mark.parametrize("kernel", ["linear", "cubic", "gaussian"])
    def test_kkt_within_tol(self, rng, kernel):
        X = rng.normal(size=(80, 3))
        y = np.where(X[:, 0] + 0.5 * rng.normal(size=80) > 0, 1.0, -1.0)
        m = smo_train(X, y, KernelSpec.from_name(kernel), C=1.0, tol=1e-3)
        margins = y * m.decision(X)
        assert kkt_violation(m.alphas, margins, m.C, tol=1e-3) == 0.0
        assert abs(m.alphas @ y) <= 1e-8

    def test_decision_oracle(self, rng):
        X = rng.normal(size=(40, 4))
        y = np.where(X[:, 1] > 0, 1.0, -1.0)
        m = smo_train(X, y, KernelSpec("polynomial", 3))
        for x in rng.normal(size=(10, 4)):
            direct = sum(a * (1 + sv @ x) ** 3 for a, sv in zip(m.dual_coefs, m.support_vectors)) + m.bias
            assert svm_decision(m, x) == pytest.approx(direct, rel=1e-10, abs=1e-10)

    def test_errors(self):
        with pytest.raises(ValueError):
            smo_train([[0.0], [1.0]], [1, 1])
        with pytest.raises(ValueError):
            smo_train([[0.0], [1.0]], [0, 1])
        m = smo_train([[0.0], [1.0]], [-1, 1])
        with pytest.raises(ValueError):
            svm_decision(m, [1.0, 2.0])

    def test_convergence_error_carries_violation(self, rng):
        X = rng.normal(size=(60, 2))
        y = np.where(rng.random(60) < 0.5, 1.0, -1.0)
        with pytest.raises(ConvergenceError) as info:
            smo_train(X, y, KernelSpec("linear"), C=100, max_iter=2)
        assert info.value.worst_violation > 0

    def test_deterministic(self, rng):
        X = rng.normal(size=(50, 3))
        y = np.where(X[:, 2] > 0, 1.0, -1.0)
        a = smo_train(X, y, KernelSpec("gaussian"), rng_seed=3)
        b = smo_train(X, y, KernelSpec("gaussian"), rng_seed=3)
        assert a.bias == b.bias and np.array_equal(a.dual_coefs, b.dual_coefs)

    def test_round_trip(self, rng):
        X = rng.normal(size=(30, 2))
        y = np.where(X[:, 0] > 0, 1.0, -1.0)
        m = smo_train(X, y, KernelSpec("linear"))
        m2 = BinarySvmModel.from_dict(m.to_dict())
        assert np.array_equal(m.decision(X), m2.decision(X))


class TestKkt:
    def test_conditions(self):
        assert kkt_violation([0.0, 0.5, 1.0], [1.2, 1.0, 0.4], C=1.0) == 0.0
        assert kkt_violation([0.0], [0.5], C=1.0) == pytest.approx(0.5)
        assert kkt_violation([1.0], [1.5], C=1.0) == pytest.approx(0.5)
        assert kkt_violation([0.5], [0.9], C=1.0, tol=0.2) == 0.0


class TestOvo:
    def test_pair_counts(self):
        assert n_pair_models(3) == 3 and n_pair_models(26) == 325

    def test_three_blobs(self, rng):
        X, y = blobs(rng, [(0, 0), (4, 0), (0, 4)], 30)
        m = ovo_train(X, y, KernelSpec("linear"))
        assert len(m.pairs) == 3
        assert len({p for p, _ in m.pairs}) == 3
        preds = [ovo_predict(m, x) for x in X]
        assert [p for p, _ in preds] == y.tolist()
        assert all(v.sum() == 3 for _, v in preds)
        label, votes = ovo_predict(m, np.array([4.0, 0.0]))
        assert label == 1 and votes[1] == 2

    def test_pair_only_sees_its_rows(self, rng):
        X, y = blobs(rng, [(0, 0), (4, 0), (0, 4)], 10)
        m = ovo_train(X, y, KernelSpec("linear"))
        for (a, b), bm in m.pairs:
            own = X[(y == a) | (y == b)]
            assert all(any(np.array_equal(sv, r) for r in own) for sv in bm.support_vectors)

    def test_cycle_tie_uses_scores(self):
        pairs = [(0, 1), (0, 2), (1, 2)]
        # 0 beats 1, 2 beats 0, 1 beats 2: one vote each
        best, votes, conf = vote([0.5, -2.0, 0.3], pairs, 3)
        assert votes.tolist() == [1, 1, 1]
        assert best == 2 and conf[2] == 2.0
        for _ in range(3):
            assert vote([0.5, -2.0, 0.3], pairs, 3)[0] == 2

    def test_full_tie_goes_to_class_order(self):
        best, votes, _ = vote([1.0, -1.0, 1.0], [(0, 1), (0, 2), (1, 2)], 3)
        assert votes.tolist() == [1, 1, 1] and best == 0

    def test_round_trip(self, rng):
        X, y = blobs(rng, [(0, 0), (3, 0), (0, 3)], 8)
        m = ovo_train(X, y.astype(str), KernelSpec("polynomial", 3))
        m2 = OvoSvmModel.from_dict(m.to_dict(), 2)
        assert np.array_equal(m.decision_matrix(X), m2.decision_matrix(X))

    def test_pair_error_names_pair(self, rng):
        X = rng.normal(size=(30, 2))
        y = np.arange(30) % 3
        with pytest.raises(ConvergenceError) as info:
            ovo_train(X, y, KernelSpec("linear"), C=100, max_iter=1)
        assert info.value.pair == (0, 1)

    def test_estimator_api(self, rng):
        X, y = blobs(rng, [(0, 0), (4, 0), (0, 4)], 15)
        labels = np.array(["a", "b", "c"])[y]
        est = OneVsOneSVC(kernel="linear")
        assert est.fit(X, labels).score(X, labels) == 1.0
        assert est.decision_function(X).shape == (45, 3)
        assert (est.votes(X).sum(axis=1) == 3).all()
        assert clone(est).get_params()["kernel"] == "linear"
        with pytest.raises(ValueError):
            est.predict(X[:, :1])


class TestKnn:
    def test_examples(self):
        X = np.array([[0.0], [0.1], [5.0], [0.2]])
        y = np.array(["A", "A", "B", "B"])
        assert knn_predict(X, y, np.array([5.0]), k=1) == "B"
        assert knn_predict(X[:3], y[:3], np.array([0.05]), k=3) == "A"

    def test_vote_tie_by_mean_distance(self):
        X = np.array([[0.0], [3.0], [-1.0], [4.0]])
        y = np.array(["B", "A", "B", "A"])
        # neighbours of 1.6: 3.0 (A, 1.4), 0.0 (B, 1.6) -> 1-1 tie, A is closer
        assert knn_predict(X, y, np.array([1.6]), k=2) == "A"

    def test_exhaustive_oracle(self, rng):
        X = rng.integers(0, 4, (60, 2)).astype(float)  # many exact distance ties
        y = rng.integers(0, 3, 60)
        for q in rng.integers(0, 4, (500, 2)).astype(float):
            d = [math.dist(q, r) for r in X]
            order = sorted(range(60), key=lambda i: (d[i], i))[:5]
            tally = {}
            for i in order:
                tally.setdefault(y[i], []).append(d[i])
            want = max(sorted(tally), key=lambda c: (len(tally[c]), -sum(tally[c]) / len(tally[c]), -c))
            assert knn_predict(X, y, q, k=5) == want

    def test_k1_training_accuracy(self, rng):
        X = rng.normal(size=(40, 3))
        y = rng.integers(0, 4, 40)
        assert KNNClassifier(1).fit(X, y).score(X, y) == 1.0

    def test_bad_k(self):
        with pytest.raises(ValueError):
            knn_predict(np.zeros((2, 1)), np.array([0, 1]), np.zeros(1), k=3)


class TestGnb:
    def test_hand_dataset(self):
        m = gnb_train(np.array([[1.0], [2.0], [8.0], [9.0]]), np.array(["A", "A", "B", "B"]))
        label, post = gnb_predict(m, np.array([2.0]))

        def density(x, mu, var):
            return math.exp(-(x - mu) ** 2 / (2 * var)) / math.sqrt(2 * math.pi * var)

        a, b = density(2, 1.5, 0.25), density(2, 8.5, 0.25)
        assert label == "A"
        assert post[0] == pytest.approx(a / (a + b), rel=1e-12)
        assert post[1] == pytest.approx(b / (a + b), rel=1e-6, abs=1e-300)

    def test_symmetric_midpoint(self):
        m = gnb_train(np.array([[0.0], [1.0], [3.0], [4.0]]), np.array([0, 0, 1, 1]))
        _, post = gnb_predict(m, np.array([2.0]))
        assert post.tolist() == pytest.approx([0.5, 0.5], abs=1e-12)

    def test_priors_and_floor(self):
        X = np.array([[1.0, 0], [1.0, 1], [1.0, 2], [5.0, 3]])
        with pytest.raises(ValueError):
            gnb_train(X, np.array([0, 0, 0, 1]))
        m = gnb_train(np.vstack([X, [[5.0, 4]]]), np.array([0, 0, 0, 1, 1]))
        assert m.priors.sum() == pytest.approx(1.0)
        assert (m.variances > 0).all()

    def test_posteriors_sum_to_one(self, rng):
        X = rng.normal(size=(60, 4))
        y = rng.integers(0, 3, 60)
        est = GaussianNaiveBayes().fit(X, y)
        assert np.allclose(est.predict_proba(rng.normal(size=(20, 4))).sum(axis=1), 1, atol=1e-12)


@given(st.floats(0.01, 100), st.integers(0, 2 ** 16))
def test_scaling_leaves_knn_and_gnb_argmax(scale, seed):
    rng = np.random.default_rng(seed)
    X = rng.normal(size=(30, 3))
    y = rng.integers(0, 3, 30)
    y[:6] = [0, 0, 1, 1, 2, 2]
    Q = rng.normal(size=(10, 3))
    knn = KNNClassifier(3).fit(X, y).predict(Q)
    assert np.array_equal(knn, KNNClassifier(3).fit(X * scale, y).predict(Q * scale))
    g1 = GaussianNaiveBayes().fit(X, y).predict_proba(Q)
    g2 = GaussianNaiveBayes().fit(X * scale, y).predict_proba(Q * scale)
    assert np.allclose(g1, g2, atol=1e-9)


class TestFolds:
    def test_one_of_each_class(self):
        plan = stratified_folds(np.array([0] * 5 + [1] * 5), k=5)
        y = np.array([0] * 5 + [1] * 5)
        for f in plan.folds:
            assert sorted(y[f].tolist()) == [0, 1]

    @given(st.lists(st.integers(0, 3), min_size=10, max_size=80), st.integers(2, 10), st.integers(0, 99))
    def test_partition_and_balance(self, labels, k, seed):
        y = np.array(labels)
        if k > len(y):
            return
        import warnings
        with warnings.catch_warnings():
            warnings.simplefilter("ignore")
            plan = stratified_folds(y, k, seed)
        allrows = np.concatenate(plan.folds)
        assert sorted(allrows.tolist()) == list(range(len(y)))
        for c in set(labels):
            per = [int(np.sum(y[f] == c)) for f in plan.folds]
            assert max(per) - min(per) <= 1
        sizes = [len(f) for f in plan.folds]
        assert max(sizes) - min(sizes) <= 1

    def test_seeds(self):
        y = np.arange(24) % 2
        assert [f.tolist() for f in stratified_folds(y, 4, 7).folds] == \
            [f.tolist() for f in stratified_folds(y, 4, 7).folds]
        assert [f.tolist() for f in stratified_folds(y, 4, 7).folds] != \
            [f.tolist() for f in stratified_folds(y, 4, 8).folds]

    def test_small_class_warns(self):
        with pytest.warns(UserWarning):
            plan = stratified_folds(np.array([0] * 10 + [1] * 2), k=5)
        assert plan.warnings

    def test_too_many_folds(self):
        with pytest.raises(ValueError):
            stratified_folds(np.array([0, 1]), k=3)


class _Perfect(ClassifierMixin, BaseEstimator):
    def fit(self, X, y):
        return self

    def predict(self, X):
        return (X[:, 0] > 0.5).astype(int)


class _Majority(ClassifierMixin, BaseEstimator):
    def fit(self, X, y):
        vals, counts = np.unique(y, return_counts=True)
        self.label_ = vals[np.argmax(counts)]
        return self

    def predict(self, X):
        return np.full(len(X), self.label_)


class _Broken(ClassifierMixin, BaseEstimator):
    def fit(self, X, y):
        raise RuntimeError("boom")


class TestCrossValidate:
    def test_perfect_stub(self):
        y = np.arange(40) % 2
        X = y[:, None].astype(float)
        res = cross_validate(_Perfect(), X, y, stratified_folds(y, 10), standardize=False)
        s = res.summary()
        assert s["accuracy"] == (1.0, 0.0)
        assert len(res.matrices) == 10 and res.pooled.total == 40

    def test_majority_stub(self):
        y = np.array([0] * 70 + [1] * 30)
        res = cross_validate(_Majority(), np.zeros((100, 1)), y, stratified_folds(y, 10))
        assert res.summary()["accuracy"][0] == pytest.approx(0.7, abs=0.01)

    def test_fold_error(self):
        y = np.arange(20) % 2
        with pytest.raises(FoldError) as info:
            cross_validate(_Broken(), np.zeros((20, 1)), y, stratified_folds(y, 5))
        assert info.value.fold == 0

    @pytest.mark.parametrize("seed", [1, 2, 3, 4, 5])
    def test_three_blobs_linear(self, seed):
        rng = np.random.default_rng(seed)
        X, y = blobs(rng, [(0, 0), (3, 0), (0, 3)], 20, spread=0.5)
        assert cv_accuracy(OneVsOneSVC("linear"), X, y, k=10, rng_seed=seed) >= 0.95

    def test_global_mode_matches_prescaled(self, rng):
        X, y = blobs(rng, [(0, 0), (3, 0)], 15, spread=1.0)
        X = X * [10, 0.1]
        plan = stratified_folds(y, 5)
        a = cross_validate(KNNClassifier(3), X, y, plan, standardize="global")
        Z = (X - X.mean(0)) / X.std(0)
        b = cross_validate(KNNClassifier(3), Z, y, plan, standardize=False)
        assert all(m1 == m2 for m1, m2 in zip(a.matrices, b.matrices))
