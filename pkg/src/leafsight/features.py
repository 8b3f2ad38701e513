"""Gray-level co-occurrence texture statistics and color moments.

Gray levels are indexed from 0; natural logarithms throughout with
``0 * log 0 = 0``.
"""
from dataclasses import astuple, dataclass

import numpy as np

from ._linalg import real_eigenvalues
from .imaging import check_gray, check_rgb, to_grayscale

DEFAULT_OFFSETS = ((1, 0), (1, 1), (0, 1), (-1, 1))

COLOR_NAMES = ("mean_r", "mean_g", "mean_b", "std_r", "std_g", "std_b")
TEXTURE_NAMES = (
    "uniformity", "entropy", "contrast", "dissimilarity", "homogeneity",
    "inverse_difference", "correlation", "autocorrelation", "cluster_shade",
    "cluster_prominence", "max_probability", "sum_of_squares", "sum_average",
    "sum_variance", "sum_entropy", "difference_variance", "difference_entropy",
    "imc1", "imc2", "mcc", "idn", "idmn",
)
#: Column order of every feature matrix and feature CSV produced by the package.
FEATURE_NAMES = COLOR_NAMES + TEXTURE_NAMES


class EmptyGlcmError(ValueError):
    pass


def _xlogx(p):
    p = np.asarray(p, dtype=np.float64)
    out = np.zeros_like(p)
    nz = p > 0
    out[nz] = p[nz] * np.log(p[nz])
    return out


def _entropy(p):
    return float(-_xlogx(p).sum())


@dataclass(frozen=True)
class Glcm:
    """Co-occurrence counts and their normalised distribution.

    ``counts`` is None when the matrix was created directly from
    probabilities.
    """

    levels: int
    counts: np.ndarray
    probs: np.ndarray

    @classmethod
    def from_counts(cls, counts):
        counts = np.asarray(counts)
        total = counts.sum()
        if total <= 0:
            raise EmptyGlcmError("co-occurrence matrix has no pairs")
        return cls(counts.shape[0], counts, counts / total)

    @classmethod
    def from_probabilities(cls, probs):
        p = np.asarray(probs, dtype=np.float64)
        if p.ndim != 2 or p.shape[0] != p.shape[1]:
            raise ValueError("probabilities must form a square matrix")
        if (p < 0).any() or p.sum() <= 0:
            raise ValueError("probabilities must be non-negative with positive mass")
        return cls(p.shape[0], None, p / p.sum())


@dataclass(frozen=True)
class MarginalStats:
    px: np.ndarray
    py: np.ndarray
    mu_x: float
    mu_y: float
    sigma_x: float
    sigma_y: float
    p_sum: np.ndarray
    p_diff: np.ndarray
    hx: float
    hy: float
    hxy: float
    hxy1: float
    hxy2: float


@dataclass(frozen=True)
class TextureFeatures:
    uniformity: float
    entropy: float
    contrast: float
    dissimilarity: float
    homogeneity: float
    inverse_difference: float
    correlation: float
    autocorrelation: float
    cluster_shade: float
    cluster_prominence: float
    max_probability: float
    sum_of_squares: float
    sum_average: float
    sum_variance: float
    sum_entropy: float
    difference_variance: float
    difference_entropy: float
    imc1: float
    imc2: float
    mcc: float
    idn: float
    idmn: float

    def as_array(self):
        return np.array(astuple(self), dtype=np.float64)


@dataclass(frozen=True)
class ColorMoments:
    mean_r: float
    mean_g: float
    mean_b: float
    std_r: float
    std_g: float
    std_b: float

    def as_array(self):
        return np.array(astuple(self), dtype=np.float64)


@dataclass(frozen=True)
class FeatureVector:
    """28 named measurements plus a label slot (29 entries in total)."""

    values: np.ndarray
    label: object = None

    names = FEATURE_NAMES + ("label",)

    def __len__(self):
        return len(self.names)

    def as_dict(self):
        d = dict(zip(FEATURE_NAMES, self.values.tolist()))
        d["label"] = self.label
        return d


@dataclass(frozen=True)
class FeatureConfig:
    levels: int = 8
    offsets: tuple = DEFAULT_OFFSETS
    symmetric: bool = True

    def __post_init__(self):
        if self.levels < 2:
            raise ValueError("levels must be >= 2")
        if not self.offsets:
            raise ValueError("at least one GLCM offset is required")
        for dx, dy in self.offsets:
            if dx == 0 and dy == 0:
                raise ValueError("GLCM offset (0, 0) is not allowed")


# -- co-occurrence ----------------------------------------------------------

def quantize(gray, mask=None, levels=8):
    """Equal-width binning of 0..255 into ``levels`` bins; -1 outside ``mask``."""
    if levels < 2:
        raise ValueError("levels must be >= 2")
    gray = check_gray(gray)
    q = (gray.astype(np.int64) * levels) // 256
    if mask is not None:
        q = np.where(np.asarray(mask, dtype=bool), q, -1)
    return q


def build_glcm(q, mask=None, offsets=DEFAULT_OFFSETS, symmetric=True, levels=8):
    """Accumulate co-occurrences of quantised levels over every offset.

    ``offsets`` are ``(dx, dy)`` pairs: ``dx`` moves along columns and ``dy``
    along rows.  A pair counts only when both pixels are inside ``mask``.
    """
    q = np.asarray(q)
    if mask is None:
        mask = q >= 0
    mask = np.asarray(mask, dtype=bool) & (q >= 0)
    if not offsets:
        raise ValueError("at least one offset is required")
    if not mask.any():
        raise EmptyGlcmError("mask is empty")
    h, w = q.shape
    counts = np.zeros(levels * levels, dtype=np.int64)
    for dx, dy in offsets:
        if dx == 0 and dy == 0:
            raise ValueError("offset (0, 0) is not allowed")
        y0, y1 = max(0, -dy), min(h, h - dy)
        x0, x1 = max(0, -dx), min(w, w - dx)
        if y0 >= y1 or x0 >= x1:
            continue
        a = q[y0:y1, x0:x1]
        b = q[y0 + dy:y1 + dy, x0 + dx:x1 + dx]
        ok = mask[y0:y1, x0:x1] & mask[y0 + dy:y1 + dy, x0 + dx:x1 + dx]
        counts += np.bincount(a[ok] * levels + b[ok], minlength=levels * levels)
    counts = counts.reshape(levels, levels)
    if symmetric:
        counts = counts + counts.T
    if counts.sum() == 0:
        raise EmptyGlcmError("no co-occurring pixel pairs inside the mask")
    return Glcm.from_counts(counts)


def marginal_stats(g):
    p = g.probs
    n = g.levels
    idx = np.arange(n, dtype=np.float64)
    px = p.sum(axis=1)
    py = p.sum(axis=0)
    mu_x = float(idx @ px)
    mu_y = float(idx @ py)
    sigma_x = float(np.sqrt(max(((idx - mu_x) ** 2) @ px, 0.0)))
    sigma_y = float(np.sqrt(max(((idx - mu_y) ** 2) @ py, 0.0)))

    i, j = np.indices(p.shape)
    p_sum = np.bincount((i + j).ravel(), weights=p.ravel(), minlength=2 * n - 1)
    p_diff = np.bincount(np.abs(i - j).ravel(), weights=p.ravel(), minlength=n)

    outer = np.outer(px, py)
    log_outer = np.zeros_like(outer)
    nz = outer > 0
    log_outer[nz] = np.log(outer[nz])
    return MarginalStats(
        px=px, py=py, mu_x=mu_x, mu_y=mu_y, sigma_x=sigma_x, sigma_y=sigma_y,
        p_sum=p_sum, p_diff=p_diff,
        hx=_entropy(px), hy=_entropy(py), hxy=_entropy(p),
        hxy1=float(-(p * log_outer).sum()),
        hxy2=float(-(outer * log_outer).sum()),
    )


def maximal_correlation_coefficient(p, px, py):
    """Square root of the second largest eigenvalue of
    ``Q[i, j] = sum_k p[i, k] p[j, k] / (px[i] py[k])``.

    Rows with zero ``px`` and columns with zero ``py`` are dropped; a matrix
    with a single surviving row has no second eigenvalue and scores 0.
    """
    rows = px > 0
    cols = py > 0
    # Q is similar to B B^T with B = p / sqrt(px py); entries of B are <= 1,
    # so tiny marginals cannot overflow the way a direct division would.
    b = p[np.ix_(rows, cols)] / np.sqrt(px[rows])[:, None] / np.sqrt(py[cols])[None, :]
    q = b @ b.T
    if q.shape[0] < 2:
        return 0.0
    lam = real_eigenvalues(q, tol=1e-10, max_iter=500)[1]
    return float(np.sqrt(min(max(lam, 0.0), 1.0)))


def texture_features(g, m=None):
    """The 22 co-occurrence statistics of a normalised GLCM."""
    m = m or marginal_stats(g)
    p = g.probs
    n = g.levels
    i, j = np.indices(p.shape).astype(np.float64)
    d = i - j

    # Standard textbook forms: autocorrelation = sum i*j*p; cluster terms are
    # moments of (i + j - mu_x - mu_y); sum of squares is the row variance;
    # sum/difference variance are the variances of p_sum / p_diff.
    ks = np.arange(2 * n - 1, dtype=np.float64)
    kd = np.arange(n, dtype=np.float64)
    sum_average = float(ks @ m.p_sum)
    diff_average = float(kd @ m.p_diff)
    sigma = m.sigma_x * m.sigma_y
    autocorrelation = float((i * j * p).sum())
    if sigma > 0:
        correlation = (autocorrelation - m.mu_x * m.mu_y) / sigma
    else:
        # constant region: perfectly correlated by convention
        correlation = 1.0
    centred = i + j - m.mu_x - m.mu_y
    hmax = max(m.hx, m.hy)

    return TextureFeatures(
        uniformity=float((p ** 2).sum()),
        entropy=m.hxy,
        contrast=float((d ** 2 * p).sum()),
        dissimilarity=float((np.abs(d) * p).sum()),
        homogeneity=float((p / (1.0 + d ** 2)).sum()),
        inverse_difference=float((p / (1.0 + np.abs(d))).sum()),
        correlation=float(correlation),
        autocorrelation=autocorrelation,
        cluster_shade=float((centred ** 3 * p).sum()),
        cluster_prominence=float((centred ** 4 * p).sum()),
        max_probability=float(p.max()),
        sum_of_squares=float(((i - m.mu_x) ** 2 * p).sum()),
        sum_average=sum_average,
        sum_variance=float(((ks - sum_average) ** 2) @ m.p_sum),
        sum_entropy=_entropy(m.p_sum),
        difference_variance=float(((kd - diff_average) ** 2) @ m.p_diff),
        difference_entropy=_entropy(m.p_diff),
        imc1=(m.hxy - m.hxy1) / hmax if hmax > 0 else 0.0,
        imc2=float(np.sqrt(max(1.0 - np.exp(-2.0 * (m.hxy2 - m.hxy)), 0.0))),
        mcc=maximal_correlation_coefficient(p, m.px, m.py),
        idn=float((p / (1.0 + np.abs(d) / n)).sum()),
        idmn=float((p / (1.0 + d ** 2 / n ** 2)).sum()),
    )


def color_moments(img, mask):
    """Per-channel population mean and standard deviation over ``mask``."""
    img = check_rgb(img)
    mask = np.asarray(mask, dtype=bool)
    if mask.shape != img.shape[:2]:
        raise ValueError("mask and image shapes differ")
    if not mask.any():
        raise ValueError("mask is empty")
    px = img[mask].astype(np.float64)
    mean = px.mean(axis=0)
    std = np.sqrt(((px - mean) ** 2).mean(axis=0))
    return ColorMoments(*mean.tolist(), *std.tolist())


def extract_feature_vector(img, leaf, lesion, cfg=None, label=None):
    """Color moments and texture statistics of the lesion region."""
    cfg = cfg or FeatureConfig()
    img = check_rgb(img)
    region = np.asarray(lesion, dtype=bool)
    if leaf is not None:
        region = region & np.asarray(leaf, dtype=bool)
    if not region.any():
        raise ValueError("lesion mask is empty")
    colors = color_moments(img, region)
    q = quantize(to_grayscale(img), region, cfg.levels)
    g = build_glcm(q, region, cfg.offsets, cfg.symmetric, cfg.levels)
    texture = texture_features(g)
    return FeatureVector(np.concatenate([colors.as_array(), texture.as_array()]), label)

