"""Leaf/background separation (watershed) and lesion extraction (Otsu)."""
import heapq
from dataclasses import dataclass
from fractions import Fraction

import numpy as np
from scipy import ndimage

from .imaging import (
    bilateral_filter,
    check_gray,
    check_rgb,
    gray_world_normalize,
    hue_to_gray,
    rgb_to_hsv,
)

CROSS = np.array([[0, 1, 0], [1, 1, 1], [0, 1, 0]], dtype=bool)
_EIGHT = np.ones((3, 3), dtype=bool)


class NoLeafFoundError(RuntimeError):
    def __init__(self, n_labels):
        super().__init__(f"no leaf region survived cleanup ({n_labels} watershed basins)")
        self.n_labels = n_labels


class DegenerateHistogramError(ValueError):
    pass


@dataclass(frozen=True)
class SegmentationParams:
    spatial_sigma: float = 3.0
    range_sigma: float = 25.0
    radius: int = 5
    min_component_px: int = 16
    border_fraction: float = 0.25

    def __post_init__(self):
        if self.spatial_sigma <= 0 or self.range_sigma <= 0:
            raise ValueError("bilateral sigmas must be > 0")
        if self.radius < 1:
            raise ValueError("bilateral radius must be >= 1")
        if self.min_component_px < 0:
            raise ValueError("min_component_px must be >= 0")
        if not 0 < self.border_fraction <= 1:
            raise ValueError("border_fraction must be in (0, 1]")


# -- binary morphology ------------------------------------------------------
# Dilation treats out-of-image pixels as background, erosion as foreground,
# so the pair is an adjunction on the image domain and open/close are
# idempotent filters.

def _shift_or(mask, selem, outside):
    h, w = mask.shape
    r = selem.shape[0] // 2
    padded = np.pad(mask, r, constant_values=outside)
    out = np.zeros_like(mask) if not outside else np.ones_like(mask)
    for dy, dx in zip(*np.nonzero(selem)):
        win = padded[dy:dy + h, dx:dx + w]
        out = (out | win) if not outside else (out & win)
    return out


def binary_dilate(mask, selem=CROSS):
    return _shift_or(np.asarray(mask, dtype=bool), selem[::-1, ::-1], False)


def binary_erode(mask, selem=CROSS):
    return _shift_or(np.asarray(mask, dtype=bool), selem, True)


def binary_open(mask, selem=CROSS):
    return binary_dilate(binary_erode(mask, selem), selem)


def binary_close(mask, selem=CROSS):
    return binary_erode(binary_dilate(mask, selem), selem)


def label_components(mask):
    """8-connected component labels (1..n, raster order) and their count."""
    labels, n = ndimage.label(np.asarray(mask, dtype=bool), structure=_EIGHT)
    return labels, n


def remove_small_components(mask, min_size):
    labels, n = label_components(mask)
    if n == 0 or min_size <= 1:
        return np.asarray(mask, dtype=bool).copy()
    sizes = np.bincount(labels.ravel(), minlength=n + 1)
    keep = sizes >= min_size
    keep[0] = False
    return keep[labels]


# -- watershed --------------------------------------------------------------

def regional_minima(img):
    """Label 8-connected plateaus with no strictly lower neighbour."""
    img = check_gray(img)
    lowest_nb = ndimage.minimum_filter(img, footprint=_EIGHT, mode="constant", cval=255)
    has_lower = lowest_nb < img
    minima = np.zeros(img.shape, dtype=bool)
    for v in np.unique(img):
        plateau, n = ndimage.label(img == v, structure=_EIGHT)
        spoiled = np.unique(plateau[has_lower & (plateau > 0)])
        ok = np.ones(n + 1, dtype=bool)
        ok[0] = False
        ok[spoiled] = False
        minima |= ok[plateau]
    # distinct minima are never adjacent, so joint labelling keeps them apart
    return label_components(minima)[0]


def watershed_segment(elevation):
    """Priority-flood watershed from regional minima, 8-connectivity.

    Returns an int32 label map: 1..n for basins, 0 for ridge pixels.  Pixels
    of equal elevation are flooded in first-in-first-out order; a pixel
    touching two different basins (or only ridge pixels) becomes ridge.
    """
    elev = check_gray(elevation)
    h, w = elev.shape
    markers = regional_minima(elev)
    flat_elev = elev.ravel().tolist()
    # -1 unassigned, 0 ridge, >0 basin
    state = np.where(markers > 0, markers, -1).ravel().tolist()
    queued = [s > 0 for s in state]
    nbr = [(-1, -1), (-1, 0), (-1, 1), (0, -1), (0, 1), (1, -1), (1, 0), (1, 1)]

    heap = []
    counter = 0

    def push_neighbours(p):
        nonlocal counter
        y, x = divmod(p, w)
        for dy, dx in nbr:
            yy, xx = y + dy, x + dx
            if 0 <= yy < h and 0 <= xx < w:
                q = yy * w + xx
                if not queued[q]:
                    queued[q] = True
                    heapq.heappush(heap, (flat_elev[q], counter, q))
                    counter += 1

    for p in np.flatnonzero(markers.ravel()).tolist():
        push_neighbours(p)

    while heap:
        _, _, p = heapq.heappop(heap)
        y, x = divmod(p, w)
        found = 0
        for dy, dx in nbr:
            yy, xx = y + dy, x + dx
            if 0 <= yy < h and 0 <= xx < w:
                s = state[yy * w + xx]
                if s > 0:
                    if found == 0:
                        found = s
                    elif s != found:
                        found = -1
                        break
        state[p] = found if found > 0 else 0
        push_neighbours(p)

    return np.asarray(state, dtype=np.int32).reshape(h, w)


def absorb_ridges(labels, values):
    """Give every ridge pixel to the 8-neighbouring basin whose mean ``values``
    is closest to its own (lower label on ties).  Thick ridges are absorbed
    from the outside in."""
    labels = np.asarray(labels, dtype=np.int32).copy()
    v = np.asarray(values, dtype=np.float64)
    h, w = labels.shape
    n = int(labels.max())
    if n == 0:
        return labels
    flat = labels.ravel()
    size = np.bincount(flat, minlength=n + 1)
    means = np.bincount(flat, weights=v.ravel(), minlength=n + 1) / np.maximum(size, 1)
    while True:
        ridge = labels == 0
        if not ridge.any():
            return labels
        padded = np.pad(labels, 1)
        best = np.zeros_like(labels)
        best_cost = np.full(labels.shape, np.inf)
        for dy in (-1, 0, 1):
            for dx in (-1, 0, 1):
                if dy == dx == 0:
                    continue
                nb = padded[1 + dy:1 + dy + h, 1 + dx:1 + dx + w]
                cost = np.where(nb > 0, np.abs(v - means[nb]), np.inf)
                better = (cost < best_cost) | ((cost == best_cost) & (nb > 0) & (nb < best))
                best = np.where(better, nb, best)
                best_cost = np.where(better, cost, best_cost)
        grow = ridge & (best > 0)
        if not grow.any():
            return labels
        labels[grow] = best[grow]


def morphological_gradient(img):
    img = check_gray(img).astype(np.int16)
    hi = ndimage.maximum_filter(img, footprint=_EIGHT, mode="nearest")
    lo = ndimage.minimum_filter(img, footprint=_EIGHT, mode="nearest")
    return (hi - lo).astype(np.uint8)


def _border_pixels(shape):
    b = np.zeros(shape, dtype=bool)
    b[0, :] = b[-1, :] = True
    b[:, 0] = b[:, -1] = True
    return b


def leaf_mask(img, params=None):
    """Foreground (leaf) mask of an RGB leaf photograph.

    Gray-world balance, HSV, bilateral-filtered hue, watershed on the hue
    gradient, ridge pixels merged into the most similar neighbouring basin,
    then keep basins that are more saturated than the image median
    and cover less than ``border_fraction`` of the image border.  Opening and
    closing with a 3x3 cross and a minimum component size clean the result.
    """
    params = params or SegmentationParams()
    img = check_rgb(img)
    hsv = rgb_to_hsv(gray_world_normalize(img))
    hue = bilateral_filter(hue_to_gray(hsv), params.spatial_sigma,
                           params.range_sigma, params.radius)
    labels = absorb_ridges(watershed_segment(morphological_gradient(hue)), hue)
    n = int(labels.max())

    sat = hsv[..., 1]
    flat = labels.ravel()
    size = np.bincount(flat, minlength=n + 1).astype(np.float64)
    sat_sum = np.bincount(flat, weights=sat.ravel(), minlength=n + 1)
    mean_sat = np.divide(sat_sum, size, out=np.zeros_like(sat_sum), where=size > 0)
    border = _border_pixels(labels.shape)
    border_hits = np.bincount(labels[border], minlength=n + 1)
    keep = (mean_sat > np.median(sat)) & (border_hits < params.border_fraction * border.sum())
    keep[0] = False

    mask = binary_close(binary_open(keep[labels]))
    mask = remove_small_components(mask, params.min_component_px)
    if not mask.any():
        raise NoLeafFoundError(n)
    return mask


# -- Otsu -------------------------------------------------------------------

def gray_histogram(gray, mask=None):
    gray = check_gray(gray)
    values = gray if mask is None else gray[np.asarray(mask, dtype=bool)]
    return np.bincount(values.ravel(), minlength=256).astype(np.int64)


def between_class_variance(hist):
    """Exact between-class variance for every threshold t (class 0 = levels <= t).

    Returned as a list of Fractions; thresholds that leave a class empty score 0.
    """
    hist = [int(c) for c in hist]
    total = sum(hist)
    total_sum = sum(level * c for level, c in enumerate(hist))
    out = []
    n0 = s0 = 0
    for t, c in enumerate(hist):
        n0 += c
        s0 += t * c
        n1 = total - n0
        if n0 == 0 or n1 == 0:
            out.append(Fraction(0))
        else:
            out.append(Fraction((total * s0 - total_sum * n0) ** 2, total * total * n0 * n1))
    return out


def otsu_threshold(hist):
    """Threshold maximising between-class variance; ties -> floor of their mean."""
    hist = np.asarray(hist)
    if hist.shape != (256,) or (hist < 0).any():
        raise ValueError("histogram must hold 256 non-negative counts")
    if np.count_nonzero(hist) < 2:
        raise DegenerateHistogramError("histogram has fewer than two occupied levels")
    scores = between_class_variance(hist)
    best = max(scores)
    ties = [t for t, s in enumerate(scores) if s == best]
    return sum(ties) // len(ties)


def diseased_region_mask(gray, leaf, polarity="dark"):
    """Lesion pixels: Otsu split of the leaf histogram, darker (or brighter) side."""
    if polarity not in ("dark", "bright"):
        raise ValueError("polarity must be 'dark' or 'bright'")
    gray = check_gray(gray)
    leaf = np.asarray(leaf, dtype=bool)
    if leaf.shape != gray.shape:
        raise ValueError("mask and image shapes differ")
    if not leaf.any():
        raise ValueError("leaf mask is empty")
    t = otsu_threshold(gray_histogram(gray, leaf))
    side = gray <= t if polarity == "dark" else gray > t
    return side & leaf
