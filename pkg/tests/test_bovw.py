import json

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from leafsight.bovw import (
    DISEASED,
    HEALTHY,
    DetectorParams,
    GateModel,
    HealthGate,
    Keypoint,
    box_sum,
    classify_health,
    describe,
    detect_keypoints,
    encode,
    hessian_response,
    integral_image,
    kmeans_vocabulary,
    train_health_gate,
    Vocabulary,
)
from leafsight.datasets import make_texture_disk

YY, XX = np.mgrid[:96, :96]


def blob_image(*blobs, background=200):
    img = np.full((96, 96), float(background))
    for cy, cx, amp in blobs:
        img -= amp * np.exp(-((YY - cy) ** 2 + (XX - cx) ** 2) / (2 * 4.0 ** 2))
    return np.clip(np.round(img), 0, 255).astype(np.uint8)


class TestIntegralImage:
    def test_ones(self):
        ii = integral_image(np.ones((4, 4), np.uint8))
        assert ii.tolist() == [[x * y for x in range(5)] for y in range(5)]

    def test_random_boxes(self, rng):
        g = rng.integers(0, 256, (40, 50)).astype(np.uint8)
        ii = integral_image(g)
        assert box_sum(ii, 0, 0, 40, 50) == int(g.sum(dtype=np.int64))
        for _ in range(100):
            y0, y1 = sorted(rng.integers(0, 41, 2))
            x0, x1 = sorted(rng.integers(0, 51, 2))
            naive = sum(int(g[y, x]) for y in range(y0, y1) for x in range(x0, x1))
            assert box_sum(ii, y0, x0, y1, x1) == naive

    def test_no_overflow_at_max(self):
        ii = integral_image(np.full((256, 256), 255, np.uint8))
        assert ii[-1, -1] == 256 * 256 * 255 and ii.dtype == np.int64

    def test_clipping(self):
        ii = integral_image(np.ones((3, 3), np.uint8))
        assert box_sum(ii, -5, -5, 10, 10) == 9
        assert box_sum(ii, 2, 2, 1, 1) == 0


class TestDetector:
    def test_constant_image(self):
        assert detect_keypoints(integral_image(np.full((96, 96), 77, np.uint8))) == []

    def test_single_blob(self):
        ii = integral_image(blob_image((32, 32, 150)))
        kps = detect_keypoints(ii)
        assert len(kps) == 1
        k = kps[0]
        assert abs(k.x - 32) <= 2 and abs(k.y - 32) <= 2
        # exhaustive scan: the keypoint is the global response maximum
        stack = np.stack([hessian_response(ii, L) for L in DetectorParams().filter_sizes])
        assert k.response == stack.max()

    def test_two_blobs_ordered_by_contrast(self):
        kps = detect_keypoints(integral_image(blob_image((30, 30, 150), (66, 66, 80))))
        assert len(kps) == 2
        assert (round(kps[0].x), round(kps[0].y)) == (30, 30)
        assert (round(kps[1].x), round(kps[1].y)) == (66, 66)
        assert kps[0].response > kps[1].response

    def test_too_small(self):
        with pytest.raises(ValueError):
            detect_keypoints(integral_image(np.zeros((64, 64), np.uint8)))

    def test_nms_and_threshold(self, rng):
        g = rng.integers(0, 256, (96, 96)).astype(np.uint8)
        params = DetectorParams()
        kps = detect_keypoints(integral_image(g), params)
        assert kps
        assert all(k.response > params.threshold * 16 / 81 for k in kps)
        assert all(0 <= k.x < 96 and 0 <= k.y < 96 for k in kps)
        assert [k.response for k in kps] == sorted((k.response for k in kps), reverse=True)
        by_size = {}
        for k in kps:
            by_size.setdefault(k.size, []).append(k)
        for group in by_size.values():
            for i, a in enumerate(group):
                for b in group[i + 1:]:
                    assert max(abs(a.x - b.x), abs(a.y - b.y)) > 1 - 1e-9 or a.response != b.response

    def test_max_keypoints_and_dict(self, rng):
        g = rng.integers(0, 256, (96, 96)).astype(np.uint8)
        p = DetectorParams(max_keypoints=3)
        assert len(detect_keypoints(integral_image(g), p)) == 3
        assert DetectorParams.from_dict(p.to_dict()) == p


class TestDescriptor:
    def _kp(self, g):
        return detect_keypoints(integral_image(g))[0]

    def test_unit_norm(self, rng):
        g = rng.integers(0, 256, (96, 96)).astype(np.uint8)
        ii = integral_image(g)
        for kp in detect_keypoints(ii)[:20]:
            assert abs(np.linalg.norm(describe(ii, kp)) - 1) < 1e-9

    def test_flat_patch_fallback(self):
        d = describe(integral_image(np.zeros((96, 96), np.uint8)), Keypoint(40.0, 40.0, 2.0, 1.0))
        assert np.linalg.norm(d) == pytest.approx(1.0)

    def test_contrast_invariance(self):
        g1 = blob_image((40, 44, 60), background=100)
        g2 = (2 * g1.astype(int) - 0).astype(np.uint8)  # 2x every intensity, still <= 255
        kp = self._kp(g1)
        d1 = describe(integral_image(g1), kp)
        d2 = describe(integral_image(g2), kp)
        assert np.max(np.abs(d1 - d2)) < 1e-6

    def test_mirror_symmetry(self, rng):
        g = rng.integers(0, 256, (96, 96)).astype(np.uint8)
        kp = Keypoint(40.0, 47.0, 2.4, 1.0)
        mk = Keypoint(95 - 40.0, 47.0, 2.4, 1.0)
        d = describe(integral_image(g), kp).reshape(4, 4, 4)
        m = describe(integral_image(g[:, ::-1].copy()), mk).reshape(4, 4, 4)
        m = m[:, ::-1]  # sub-region columns swap
        assert np.allclose(m[..., 0], -d[..., 0], atol=1e-12)
        assert np.allclose(m[..., 1:], d[..., 1:], atol=1e-12)


class TestKmeans:
    def test_distinct_points(self, rng):
        pts = rng.normal(size=(5, 3))
        v = kmeans_vocabulary(pts, 5)
        assert v.distortions[-1] == 0
        assert sorted(map(tuple, v.centroids)) == sorted(map(tuple, pts))

    def test_two_clusters(self):
        v = kmeans_vocabulary(np.array([[0.0], [0.1], [0.9], [1.0]]), 2)
        assert sorted(v.centroids.ravel().tolist()) == pytest.approx([0.05, 0.95])

    @given(st.integers(0, 10 ** 6))
    def test_monotone_distortion(self, seed):
        rng = np.random.default_rng(seed)
        v = kmeans_vocabulary(rng.normal(size=(60, 4)), 5, rng_seed=seed)
        assert all(b <= a + 1e-9 for a, b in zip(v.distortions, v.distortions[1:]))

    def test_order_invariant(self, rng):
        D = rng.normal(size=(50, 3))
        a = kmeans_vocabulary(D, 4, rng_seed=2).centroids
        b = kmeans_vocabulary(D[rng.permutation(50)], 4, rng_seed=2).centroids
        assert np.array_equal(a, b)

    def test_errors(self):
        with pytest.raises(ValueError):
            kmeans_vocabulary(np.zeros((3, 2)), 4)
        with pytest.raises(ValueError):
            kmeans_vocabulary(np.zeros((3, 2)), 1)


class TestEncode:
    def _vocab(self, rng):
        return Vocabulary(rng.normal(size=(6, 4)))

    def test_single(self, rng):
        v = self._vocab(rng)
        h = encode(v.centroids[2:3] + 1e-3, v)
        assert h.tolist() == [0, 0, 1, 0, 0, 0]

    def test_empty(self, rng):
        assert encode(np.empty((0, 4)), self._vocab(rng)).sum() == 0

    def test_multiplicity(self, rng):
        v = self._vocab(rng)
        D = rng.normal(size=(3, 4))
        dup = np.vstack([D, D[:1], D[:1]])
        weighted = 3 * encode(D[:1], v) + encode(D[1:2], v) + encode(D[2:], v)
        assert np.allclose(encode(dup, v), weighted / 5)

    @given(arrays(np.float64, (7, 4), elements=st.floats(-3, 3)))
    def test_oracle_and_l1(self, D):
        v = Vocabulary(np.array([[0, 0, 0, 0], [1, 1, 1, 1], [-1, 2, 0, 1.5]], float))
        h = encode(D, v)
        want = np.zeros(3)
        for d in D:
            dists = [float(((d - c) ** 2).sum()) for c in v.centroids]
            want[dists.index(min(dists))] += 1
        assert np.array_equal(h, want / 7)
        assert abs(h.sum() - 1) < 1e-9


@pytest.fixture(scope="module")
def texture_gate():
    rng = np.random.default_rng(7)
    flags = np.array([False, True] * 20)
    images = [make_texture_disk(f, rng) for f in flags]
    return HealthGate(n_words=20, random_state=0).fit(images, flags)


class TestGate:
    def test_families(self, texture_gate):
        rng = np.random.default_rng(99)
        assert texture_gate.predict([make_texture_disk(False, rng)])[0] == HEALTHY
        assert texture_gate.predict([make_texture_disk(True, rng)])[0] == DISEASED

    def test_constant_image_fallback(self, texture_gate):
        r = texture_gate.classify([np.full((96, 96, 3), 128, np.uint8)])[0]
        assert r.label == DISEASED and r.low_confidence

    def test_json_round_trip_is_pure(self, texture_gate):
        doc = json.loads(json.dumps(texture_gate.gate_.to_dict()))
        assert {"k", "centroids", "svm", "detector_params"} <= set(doc)
        gate = GateModel.from_dict(doc)
        img = make_texture_disk(True, np.random.default_rng(3))
        a = classify_health(texture_gate.gate_, img)
        assert a == classify_health(gate, img) == classify_health(gate, img)

    def test_string_labels(self, texture_gate):
        rng = np.random.default_rng(5)
        imgs = [make_texture_disk(f, rng) for f in (False, True)]
        assert texture_gate.score(imgs, [HEALTHY, DISEASED]) == 1.0
        with pytest.raises(ValueError):
            texture_gate.score(imgs, ["ok", "bad"])

    def test_box_constraint_is_scale_relative(self, texture_gate):
        rng = np.random.default_rng(7)
        flags = np.array([False, True] * 20)
        images = [make_texture_disk(f, rng) for f in flags]  # same draws as the fixture
        gate = texture_gate.gate_
        from leafsight.bovw import image_descriptors
        H = np.array([encode(image_descriptors(im)[1], gate.vocabulary) for im in images])
        assert gate.svm.C == pytest.approx(10.0 / np.mean(np.sum(H * H, axis=1)), rel=1e-12)

    def test_needs_both_classes(self):
        with pytest.raises(ValueError):
            train_health_gate([], np.array([True, True]), descriptors=[])
