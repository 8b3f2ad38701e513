"""Healthy/diseased gate: box-filter Hessian keypoints, upright SURF-style
descriptors, a k-means visual vocabulary and a linear SVM on word histograms."""
from dataclasses import asdict, dataclass, field

import numpy as np
from sklearn.base import BaseEstimator, ClassifierMixin
from sklearn.utils.validation import check_is_fitted

from .imaging import check_gray, to_grayscale
from .segmentation import NoLeafFoundError, SegmentationParams, leaf_mask
from .svm import BinarySvmModel, KernelSpec, smo_train

FILTER_SIZES = (9, 15, 21, 27)
#: Upper bound of the normalised Hessian determinant for unit-range intensities.
MAX_RESPONSE = 16.0 / 81.0
HEALTHY, DISEASED = "healthy", "diseased"


def integral_image(gray):
    """Summed-area table ``ii[y, x] = sum(gray[:y, :x])`` of shape (H+1, W+1)."""
    g = check_gray(gray).astype(np.int64)
    ii = np.zeros((g.shape[0] + 1, g.shape[1] + 1), dtype=np.int64)
    ii[1:, 1:] = g.cumsum(axis=0).cumsum(axis=1)
    return ii


def box_sum(ii, y0, x0, y1, x1):
    """Sum over rows [y0, y1) and columns [x0, x1), clipped to the image."""
    h, w = ii.shape[0] - 1, ii.shape[1] - 1
    y0 = np.clip(y0, 0, h)
    y1 = np.clip(y1, 0, h)
    x0 = np.clip(x0, 0, w)
    x1 = np.clip(x1, 0, w)
    y1 = np.maximum(y1, y0)
    x1 = np.maximum(x1, x0)
    return ii[y1, x1] - ii[y0, x1] - ii[y1, x0] + ii[y0, x0]


@dataclass(frozen=True)
class DetectorParams:
    filter_sizes: tuple = FILTER_SIZES
    threshold: float = 0.001  # fraction of MAX_RESPONSE
    max_keypoints: int = None

    def to_dict(self):
        d = asdict(self)
        d["filter_sizes"] = list(self.filter_sizes)
        return d

    @classmethod
    def from_dict(cls, d):
        return cls(tuple(d["filter_sizes"]), float(d["threshold"]), d.get("max_keypoints"))


@dataclass(frozen=True)
class Keypoint:
    x: float
    y: float
    scale: float
    response: float
    size: int = 9


def hessian_response(ii, size):
    """Normalised determinant-of-Hessian map for one box-filter size.

    Pixels where the filter does not fit are ``-inf``.
    """
    h, w = ii.shape[0] - 1, ii.shape[1] - 1
    lobe = size // 3
    half = size // 2
    out = np.full((h, w), -np.inf)
    if h < size or w < size:
        return out
    ys, xs = np.mgrid[half:h - half, half:w - half]
    # second derivative across rows: full column band minus 3x the centre lobe
    dyy = (box_sum(ii, ys - half, xs - lobe + 1, ys + half + 1, xs + lobe)
           - 3 * box_sum(ii, ys - lobe // 2, xs - lobe + 1, ys + lobe // 2 + 1, xs + lobe))
    dxx = (box_sum(ii, ys - lobe + 1, xs - half, ys + lobe, xs + half + 1)
           - 3 * box_sum(ii, ys - lobe + 1, xs - lobe // 2, ys + lobe, xs + lobe // 2 + 1))
    dxy = (box_sum(ii, ys - lobe, xs - lobe, ys, xs)
           + box_sum(ii, ys + 1, xs + 1, ys + lobe + 1, xs + lobe + 1)
           - box_sum(ii, ys - lobe, xs + 1, ys, xs + lobe + 1)
           - box_sum(ii, ys + 1, xs - lobe, ys + lobe + 1, xs))
    norm = 255.0 * size * size
    dxx, dyy, dxy = dxx / norm, dyy / norm, dxy / norm
    out[half:h - half, half:w - half] = dxx * dyy - (0.9 * dxy) ** 2
    return out


def _local_max(stack):
    """Maxima over the 3x3x3 neighbourhood of a (scale, y, x) stack.

    Earlier neighbours (in scan order) must be strictly smaller and later
    ones no larger, so a plateau yields one maximum only.
    """
    s, h, w = stack.shape
    pad = np.pad(stack, 1, constant_values=-np.inf)
    keep = np.isfinite(stack)
    for ds in (-1, 0, 1):
        for dy in (-1, 0, 1):
            for dx in (-1, 0, 1):
                if ds == dy == dx == 0:
                    continue
                nb = pad[1 + ds:1 + ds + s, 1 + dy:1 + dy + h, 1 + dx:1 + dx + w]
                if (ds, dy, dx) < (0, 0, 0):
                    keep &= stack > nb
                else:
                    keep &= stack >= nb
    return keep


def _refine(resp, y, x):
    def parabola(a, b, c):
        den = a - 2 * b + c
        if not np.isfinite(den) or den >= 0:
            return 0.0
        return float(np.clip(0.5 * (a - c) / den, -0.5, 0.5))

    h, w = resp.shape
    oy = parabola(resp[y - 1, x], resp[y, x], resp[y + 1, x]) if 0 < y < h - 1 else 0.0
    ox = parabola(resp[y, x - 1], resp[y, x], resp[y, x + 1]) if 0 < x < w - 1 else 0.0
    return y + oy, x + ox


def detect_keypoints(ii, params=None):
    """Scale-space maxima of the Hessian determinant, strongest first."""
    params = params or DetectorParams()
    h, w = ii.shape[0] - 1, ii.shape[1] - 1
    sizes = tuple(params.filter_sizes)
    if min(h, w) < 3 * max(sizes):
        raise ValueError(f"image {w}x{h} is smaller than 3x the largest filter ({max(sizes)})")
    stack = np.stack([hessian_response(ii, L) for L in sizes])
    thr = params.threshold * MAX_RESPONSE
    peaks = _local_max(stack) & (stack > thr)
    kps = []
    for s, y, x in zip(*np.nonzero(peaks)):
        yy, xx = _refine(stack[s], y, x)
        L = sizes[s]
        kps.append(Keypoint(float(xx), float(yy), 1.2 * L / 9.0, float(stack[s, y, x]), L))
    kps.sort(key=lambda k: (-k.response, k.size, k.y, k.x))
    if params.max_keypoints is not None:
        kps = kps[:params.max_keypoints]
    return kps


def _round_away(v):
    return np.sign(v) * np.floor(np.abs(v) + 0.5)


def describe(ii, kp):
    """64-D upright descriptor: 4x4 sub-regions of (sum dx, sum dy, sum |dx|, sum |dy|).

    Haar responses are sampled on a 20x20 grid spanning 20 * scale around the
    keypoint, Gaussian-weighted (sigma = 3.3 * scale) and L2-normalised.
    Sample offsets are rounded symmetrically so a mirrored image yields the
    mirrored descriptor.
    """
    s = kp.scale
    hs = max(1, int(_round_away(s)))
    cx, cy = int(_round_away(kp.x)), int(_round_away(kp.y))
    off = _round_away((np.arange(20) - 9.5) * s).astype(np.int64)
    oy, ox = np.meshgrid(off, off, indexing="ij")
    py, px = cy + oy, cx + ox
    right = box_sum(ii, py - hs, px + 1, py + hs + 1, px + hs + 1)
    left = box_sum(ii, py - hs, px - hs, py + hs + 1, px)
    below = box_sum(ii, py + 1, px - hs, py + hs + 1, px + hs + 1)
    above = box_sum(ii, py - hs, px - hs, py, px + hs + 1)
    g = np.exp(-(oy.astype(float) ** 2 + ox.astype(float) ** 2) / (2.0 * (3.3 * s) ** 2))
    dx = g * (right - left) / 255.0
    dy = g * (below - above) / 255.0
    desc = np.empty((4, 4, 4))
    for r in range(4):
        for c in range(4):
            bx = dx[5 * r:5 * r + 5, 5 * c:5 * c + 5]
            by = dy[5 * r:5 * r + 5, 5 * c:5 * c + 5]
            desc[r, c] = (bx.sum(), by.sum(), np.abs(bx).sum(), np.abs(by).sum())
    desc = desc.ravel()
    norm = np.linalg.norm(desc)
    if norm == 0:
        # featureless patch: fixed unit vector keeps the norm contract
        return np.full(64, 0.125)
    return desc / norm


@dataclass
class Vocabulary:
    centroids: np.ndarray
    distortions: list = field(default_factory=list)
    n_iter: int = 0

    @property
    def k(self):
        return self.centroids.shape[0]


def _sq_dist(A, B, chunk=256):
    # direct differences (not the expanded dot-product form) keep ties exact
    out = np.empty((A.shape[0], B.shape[0]))
    for s in range(0, A.shape[0], chunk):
        out[s:s + chunk] = ((A[s:s + chunk, None, :] - B[None, :, :]) ** 2).sum(axis=2)
    return out


def kmeans_vocabulary(descriptors, k, rng_seed=0, max_iters=100):
    """k-means++ seeding followed by Lloyd iterations.

    Rows are put in lexicographic order first, so the result depends only on
    the multiset of descriptors and the seed.  Empty clusters keep their
    previous centre.
    """
    D = np.asarray(descriptors, dtype=np.float64)
    if D.ndim != 2:
        raise ValueError("descriptors must be a 2-D array")
    if k < 2:
        raise ValueError("k must be >= 2")
    if D.shape[0] < k:
        raise ValueError(f"{D.shape[0]} descriptors cannot form {k} clusters")
    D = D[np.lexsort(D.T[::-1])]
    rng = np.random.default_rng(rng_seed)
    n = D.shape[0]
    centres = [D[rng.integers(n)]]
    closest = ((D - centres[0]) ** 2).sum(axis=1)
    for _ in range(1, k):
        total = closest.sum()
        idx = rng.integers(n) if total <= 0 else rng.choice(n, p=closest / total)
        centres.append(D[idx])
        closest = np.minimum(closest, ((D - D[idx]) ** 2).sum(axis=1))
    C = np.array(centres)

    assign = None
    distortions = []
    it = 0
    for it in range(1, max_iters + 1):
        d2 = _sq_dist(D, C)
        new = np.argmin(d2, axis=1)
        distortions.append(float(d2[np.arange(n), new].sum()))
        if assign is not None and np.array_equal(new, assign):
            break
        assign = new
        for c in range(k):
            members = D[assign == c]
            if len(members):
                C[c] = members.mean(axis=0)
    return Vocabulary(C, distortions, it)


def encode(descriptors, vocab):
    """L1-normalised visual-word histogram; all zeros for an empty set."""
    D = np.asarray(descriptors, dtype=np.float64).reshape(-1, vocab.centroids.shape[1])
    hist = np.zeros(vocab.k)
    if D.shape[0] == 0:
        return hist
    words = np.argmin(_sq_dist(D, vocab.centroids), axis=1)
    hist += np.bincount(words, minlength=vocab.k)
    return hist / hist.sum()


# -- gate -------------------------------------------------------------------

@dataclass(frozen=True)
class HealthResult:
    label: str
    score: float
    low_confidence: bool = False


def image_descriptors(img, detector=None, segmentation=None, use_leaf_mask=True):
    """Keypoints and descriptors of an RGB image (background zeroed when a leaf is found)."""
    gray = to_grayscale(img)
    if use_leaf_mask:
        try:
            gray = np.where(leaf_mask(img, segmentation), gray, 0).astype(np.uint8)
        except NoLeafFoundError:
            pass
    ii = integral_image(gray)
    kps = detect_keypoints(ii, detector)
    desc = np.array([describe(ii, kp) for kp in kps]).reshape(len(kps), 64)
    return kps, desc


@dataclass
class GateModel:
    vocabulary: Vocabulary
    svm: BinarySvmModel
    detector: DetectorParams
    use_leaf_mask: bool = True
    strongest_fraction: float = 0.7
    vocab_images: list = field(default_factory=list)

    def to_dict(self):
        return {
            "k": self.vocabulary.k,
            "centroids": self.vocabulary.centroids.tolist(),
            "svm": self.svm.to_dict(),
            "detector_params": self.detector.to_dict(),
            "use_leaf_mask": self.use_leaf_mask,
            "strongest_fraction": self.strongest_fraction,
            "vocab_images": list(self.vocab_images),
        }

    @classmethod
    def from_dict(cls, d):
        vocab = Vocabulary(np.asarray(d["centroids"], dtype=np.float64))
        return cls(vocab, BinarySvmModel.from_dict(d["svm"], vocab.k),
                   DetectorParams.from_dict(d["detector_params"]),
                   bool(d.get("use_leaf_mask", True)),
                   float(d.get("strongest_fraction", 0.7)),
                   list(d.get("vocab_images", [])))


def train_health_gate(images, diseased, n_words=200, strongest_fraction=0.7,
                      vocab_fraction=0.5, detector=None, C=10.0, rng_seed=0,
                      use_leaf_mask=True, segmentation=None, max_kmeans_iter=100,
                      descriptors=None):
    """Fit the vocabulary on a seeded half of the images (strongest keypoints of
    each class only), then a linear SVM on every image's word histogram.

    ``diseased`` holds one boolean per image.  ``C`` is relative to the data
    scale: the SVM box constraint is ``C / mean(|h|^2)`` over the training
    histograms, so one setting works for any vocabulary size (word histograms
    shrink as ``k`` grows).  Pre-computed ``(keypoints, descriptors)`` per
    image may be passed as ``descriptors``.
    """
    diseased = np.asarray(diseased, dtype=bool)
    if not (diseased.any() and (~diseased).any()):
        raise ValueError("both healthy and diseased images are required")
    detector = detector or DetectorParams()
    if descriptors is None:
        descriptors = [image_descriptors(img, detector, segmentation, use_leaf_mask) for img in images]
    n = len(descriptors)
    rng = np.random.default_rng(rng_seed)
    chosen = np.sort(rng.choice(n, max(1, int(round(vocab_fraction * n))), replace=False))

    pool = []
    for cls_flag in (False, True):
        resp, desc = [], []
        for i in chosen[diseased[chosen] == cls_flag]:
            kps, d = descriptors[i]
            resp.extend(kp.response for kp in kps)
            desc.extend(d)
        if not desc:
            continue
        order = np.argsort(-np.asarray(resp), kind="stable")
        keep = order[:max(1, int(np.ceil(strongest_fraction * len(order))))]
        pool.append(np.asarray(desc)[keep])
    if not pool:
        raise ValueError("no descriptors found in the vocabulary images")
    vocab = kmeans_vocabulary(np.vstack(pool), n_words, rng_seed, max_kmeans_iter)

    hists = np.array([encode(d, vocab) for _, d in descriptors])
    has_words = hists.sum(axis=1) > 0
    y = np.where(diseased, 1.0, -1.0)
    H = hists[has_words]
    scale = float(np.mean(np.sum(H * H, axis=1)))
    svm = smo_train(H, y[has_words], KernelSpec("linear"), C / scale, rng_seed=rng_seed)
    return GateModel(vocab, svm, detector, use_leaf_mask, strongest_fraction, chosen.tolist())


def classify_health(gate, img, segmentation=None):
    """Healthy/diseased decision; images without descriptors are sent on as
    diseased with ``low_confidence`` so the disease stage still runs."""
    _, desc = image_descriptors(img, gate.detector, segmentation, gate.use_leaf_mask)
    if len(desc) == 0:
        return HealthResult(DISEASED, 0.0, True)
    score = float(gate.svm.decision(encode(desc, gate.vocabulary)[None, :])[0])
    return HealthResult(DISEASED if score >= 0 else HEALTHY, score)


class HealthGate(ClassifierMixin, BaseEstimator):
    """Estimator wrapper around the bag-of-visual-words gate.

    ``fit`` takes a list of RGB images and labels that are either booleans
    (True = diseased) or the strings ``"healthy"`` / ``"diseased"``.
    """

    def __init__(self, n_words=200, strongest_fraction=0.7, vocab_fraction=0.5,
                 threshold=0.001, C=10.0, use_leaf_mask=True, max_kmeans_iter=100,
                 random_state=0):
        self.n_words = n_words
        self.strongest_fraction = strongest_fraction
        self.vocab_fraction = vocab_fraction
        self.threshold = threshold
        self.C = C
        self.use_leaf_mask = use_leaf_mask
        self.max_kmeans_iter = max_kmeans_iter
        self.random_state = random_state

    @staticmethod
    def _as_flags(y):
        y = np.asarray(y)
        if y.dtype == bool:
            return y
        bad = set(y.tolist()) - {HEALTHY, DISEASED}
        if bad:
            raise ValueError(f"gate labels must be {HEALTHY!r}/{DISEASED!r}, got {sorted(bad)}")
        return y == DISEASED

    def fit(self, images, y):
        self.gate_ = train_health_gate(
            images, self._as_flags(y), self.n_words, self.strongest_fraction,
            self.vocab_fraction, DetectorParams(threshold=self.threshold), self.C,
            self.random_state or 0, self.use_leaf_mask, max_kmeans_iter=self.max_kmeans_iter)
        self.classes_ = np.array([DISEASED, HEALTHY])
        return self

    def classify(self, images):
        check_is_fitted(self, "gate_")
        return [classify_health(self.gate_, img) for img in images]

    def predict(self, images):
        return np.array([r.label for r in self.classify(images)])

    def decision_function(self, images):
        return np.array([r.score for r in self.classify(images)])

    def score(self, images, y):
        flags = self._as_flags(y)
        return float(np.mean((self.predict(images) == DISEASED) == flags))
