"""Raster helpers: PPM/PBM I/O, color conversion, gray-world balancing and
bilateral smoothing.

Images are plain numpy arrays:

* RGB  -- ``(H, W, 3)`` ``uint8``
* gray -- ``(H, W)`` ``uint8``
* HSV  -- ``(H, W, 3)`` ``float64`` with every channel in ``[0, 1]`` (hue in ``[0, 1)``)
* mask -- ``(H, W)`` ``bool``
"""
import re

import numpy as np


class ImageFormatError(ValueError):
    """Raised when a PPM/PBM stream cannot be decoded."""

    def __init__(self, field, message):
        super().__init__(f"{field}: {message}")
        self.field = field


def round_half_up(x):
    """Round to the nearest integer, halves going up."""
    return np.floor(np.asarray(x, dtype=np.float64) + 0.5)


def check_rgb(img):
    img = np.asarray(img)
    if img.ndim != 3 or img.shape[2] != 3:
        raise ValueError(f"expected an (H, W, 3) RGB image, got shape {img.shape}")
    if img.shape[0] < 1 or img.shape[1] < 1:
        raise ValueError("image must be at least 1x1")
    if img.dtype != np.uint8:
        if np.issubdtype(img.dtype, np.integer) and img.min() >= 0 and img.max() <= 255:
            img = img.astype(np.uint8)
        else:
            raise ValueError(f"RGB image must hold 8-bit intensities, got {img.dtype}")
    return img


def check_gray(img):
    img = np.asarray(img)
    if img.ndim != 2:
        raise ValueError(f"expected an (H, W) gray image, got shape {img.shape}")
    if img.shape[0] < 1 or img.shape[1] < 1:
        raise ValueError("image must be at least 1x1")
    if img.dtype != np.uint8:
        if np.issubdtype(img.dtype, np.integer) and img.min() >= 0 and img.max() <= 255:
            img = img.astype(np.uint8)
        else:
            raise ValueError(f"gray image must hold 8-bit intensities, got {img.dtype}")
    return img


# -- Netpbm -----------------------------------------------------------------

_TOKEN = re.compile(rb"\S+")


def _read_header(data, magic, n_fields):
    """Parse a Netpbm header; return (fields, offset of first raster byte)."""
    pos = 0
    tokens = []
    while len(tokens) < n_fields + 1:
        # skip whitespace and comments
        while pos < len(data):
            c = data[pos:pos + 1]
            if c.isspace():
                pos += 1
            elif c == b"#":
                eol = data.find(b"\n", pos)
                pos = len(data) if eol < 0 else eol + 1
            else:
                break
        m = _TOKEN.match(data, pos)
        if m is None:
            name = ["magic", "width", "height", "maxval"][len(tokens)]
            raise ImageFormatError(name, "header truncated")
        tok = m.group()
        if b"#" in tok:
            tok = tok[:tok.index(b"#")]
            pos += len(tok)
        else:
            pos = m.end()
        tokens.append(tok)
    if tokens[0] != magic:
        raise ImageFormatError("magic", f"expected {magic.decode()}, got {tokens[0]!r}")
    names = ["width", "height", "maxval"][:n_fields]
    values = []
    for name, tok in zip(names, tokens[1:]):
        if not tok.isdigit():
            raise ImageFormatError(name, f"not a positive integer: {tok!r}")
        values.append(int(tok))
    if pos >= len(data) or not data[pos:pos + 1].isspace():
        raise ImageFormatError(names[-1], "missing whitespace before raster")
    return values, pos + 1


def decode_ppm(data):
    """Decode a binary P6 PPM (maxval 255) into an ``(H, W, 3)`` uint8 array."""
    (width, height, maxval), start = _read_header(bytes(data), b"P6", 3)
    if width < 1:
        raise ImageFormatError("width", "must be >= 1")
    if height < 1:
        raise ImageFormatError("height", "must be >= 1")
    if maxval != 255:
        raise ImageFormatError("maxval", f"only 255 is supported, got {maxval}")
    need = width * height * 3
    body = data[start:start + need]
    if len(body) < need:
        raise ImageFormatError("pixels", f"expected {need} bytes, got {len(body)}")
    return np.frombuffer(body, dtype=np.uint8).reshape(height, width, 3).copy()


def encode_ppm(img):
    img = check_rgb(img)
    h, w = img.shape[:2]
    return b"P6\n%d %d\n255\n" % (w, h) + np.ascontiguousarray(img).tobytes()


def decode_pbm(data):
    """Decode a binary P4 bitmap into a bool mask (1 bits = foreground)."""
    (width, height), start = _read_header(bytes(data), b"P4", 2)
    if width < 1 or height < 1:
        raise ImageFormatError("width" if width < 1 else "height", "must be >= 1")
    row_bytes = (width + 7) // 8
    need = row_bytes * height
    body = data[start:start + need]
    if len(body) < need:
        raise ImageFormatError("pixels", f"expected {need} bytes, got {len(body)}")
    packed = np.frombuffer(body, dtype=np.uint8).reshape(height, row_bytes)
    return np.unpackbits(packed, axis=1)[:, :width].astype(bool)


def encode_pbm(mask):
    mask = np.asarray(mask, dtype=bool)
    if mask.ndim != 2:
        raise ValueError("mask must be 2-D")
    h, w = mask.shape
    return b"P4\n%d %d\n" % (w, h) + np.packbits(mask, axis=1).tobytes()


# -- color ------------------------------------------------------------------

def gray_world_normalize(img):
    """Scale each channel so its mean equals the mean over all three channels.

    A channel whose mean is zero is passed through unchanged.
    """
    img = check_rgb(img)
    x = img.astype(np.float64)
    means = x.reshape(-1, 3).mean(axis=0)
    target = means.mean()
    out = x.copy()
    for c in range(3):
        if means[c] > 0:
            out[..., c] = x[..., c] * (target / means[c])
    return np.clip(round_half_up(out), 0, 255).astype(np.uint8)


def rgb_to_hsv(img):
    """Hexcone RGB -> HSV. Hue is in turns, ``[0, 1)``; achromatic hue is 0."""
    img = check_rgb(img)
    x = img.astype(np.float64) / 255.0
    r, g, b = x[..., 0], x[..., 1], x[..., 2]
    v = x.max(axis=-1)
    mn = x.min(axis=-1)
    delta = v - mn
    chroma = delta > 0
    safe = np.where(chroma, delta, 1.0)
    s = np.where(v > 0, delta / np.where(v > 0, v, 1.0), 0.0)

    h = np.zeros_like(v)
    rmax = chroma & (v == r)
    gmax = chroma & (v == g) & ~rmax
    bmax = chroma & ~rmax & ~gmax
    h[rmax] = ((g - b) / safe)[rmax] % 6.0
    h[gmax] = ((b - r) / safe)[gmax] + 2.0
    h[bmax] = ((r - g) / safe)[bmax] + 4.0
    h = (h / 6.0) % 1.0
    return np.stack([h, s, v], axis=-1)


def to_grayscale(img):
    """Luma 0.299R + 0.587G + 0.114B, rounded half-up (exact integer arithmetic)."""
    img = check_rgb(img).astype(np.int64)
    y = 299 * img[..., 0] + 587 * img[..., 1] + 114 * img[..., 2]
    return ((y + 500) // 1000).astype(np.uint8)


def hue_to_gray(hsv):
    """Hue channel of an HSV image as 0..255 integers."""
    h = np.asarray(hsv)[..., 0]
    return np.clip(round_half_up(h * 255.0), 0, 255).astype(np.uint8)


# -- filtering --------------------------------------------------------------

def bilateral_filter(img, spatial_sigma=3.0, range_sigma=25.0, radius=5):
    """Edge-preserving smoothing of a gray image.

    Every output pixel is the mean of its ``(2*radius+1)**2`` window weighted
    by ``exp(-d**2 / 2 spatial_sigma**2) * exp(-dI**2 / 2 range_sigma**2)``.
    Windows are clipped at the image border.
    """
    if spatial_sigma <= 0 or range_sigma <= 0:
        raise ValueError("spatial_sigma and range_sigma must be > 0")
    if radius < 1:
        raise ValueError("radius must be >= 1")
    img = check_gray(img)
    x = img.astype(np.float64)
    h, w = x.shape
    num = np.zeros_like(x)
    den = np.zeros_like(x)
    for dy in range(-radius, radius + 1):
        for dx in range(-radius, radius + 1):
            # output region whose neighbour at (dy, dx) lies inside the image
            oy0, oy1 = max(0, -dy), min(h, h - dy)
            ox0, ox1 = max(0, -dx), min(w, w - dx)
            if oy0 >= oy1 or ox0 >= ox1:
                continue
            centre = x[oy0:oy1, ox0:ox1]
            nb = x[oy0 + dy:oy1 + dy, ox0 + dx:ox1 + dx]
            ws = np.exp(-(dx * dx + dy * dy) / (2.0 * spatial_sigma ** 2))
            wgt = ws * np.exp(-((nb - centre) ** 2) / (2.0 * range_sigma ** 2))
            num[oy0:oy1, ox0:ox1] += wgt * nb
            den[oy0:oy1, ox0:ox1] += wgt
    return np.clip(round_half_up(num / den), 0, 255).astype(np.uint8)
