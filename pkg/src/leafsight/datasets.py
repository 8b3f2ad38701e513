"""Synthetic leaf photographs for tests, demos and the fixture corpus.

A leaf is a green ellipse on a gray, weakly textured background.  Diseased
leaves carry dark lesions whose colour and texture depend on the class.
"""
from dataclasses import dataclass

import numpy as np

LEAF_RGB = (70, 150, 55)
BACKGROUND_RGB = (125, 125, 125)


@dataclass(frozen=True)
class LesionStyle:
    """How lesions of one disease look.

    ``texture`` is one of ``flat``, ``hstripes``, ``dstripes``, ``checker``
    or ``speckle``; ``period`` is its wavelength in pixels.
    """
    rgb: tuple
    texture: str = "flat"
    period: int = 4
    contrast: float = 30.0
    n_spots: int = 4
    radius: float = 6.5


# Five diseases.  The first two mix the same two colours and two textures
# crosswise, so telling them apart needs a colour x texture interaction.
DISEASE_STYLES = {
    "blight": (LesionStyle((110, 60, 25), "hstripes", 4), LesionStyle((60, 40, 90), "checker", 3)),
    "mildew": (LesionStyle((110, 60, 25), "checker", 3), LesionStyle((60, 40, 90), "hstripes", 4)),
    "rust": (LesionStyle((150, 70, 10), "speckle", 2, 45.0),),
    "scab": (LesionStyle((40, 45, 20), "flat", 4, 8.0),),
    "spot": (LesionStyle((90, 30, 30), "dstripes", 6, 40.0),),
}


def _texture(kind, period, shape, rng):
    h, w = shape
    yy, xx = np.mgrid[:h, :w]
    if kind == "flat":
        return np.zeros(shape)
    if kind == "hstripes":
        return np.sign(np.sin(2 * np.pi * yy / period))
    if kind == "dstripes":
        return np.sign(np.sin(2 * np.pi * (xx + yy) / period))
    if kind == "checker":
        return np.where(((yy // period) + (xx // period)) % 2 == 0, 1.0, -1.0)
    if kind == "speckle":
        return rng.choice([-1.0, 1.0], size=shape)
    raise ValueError(f"unknown texture {kind!r}")


def _leaf_geometry(size, rng):
    c = size / 2 + rng.uniform(-3, 3, 2)
    axes = size * np.array([rng.uniform(0.28, 0.33), rng.uniform(0.22, 0.27)])
    yy, xx = np.mgrid[:size, :size]
    theta = rng.uniform(0, np.pi)
    u = (xx - c[1]) * np.cos(theta) + (yy - c[0]) * np.sin(theta)
    v = -(xx - c[1]) * np.sin(theta) + (yy - c[0]) * np.cos(theta)
    return (u / axes[0]) ** 2 + (v / axes[1]) ** 2 <= 1.0, c, axes


def make_leaf_image(disease=None, rng=None, size=96, noise=4.0, styles=None):
    """One RGB leaf image (``uint8``, size x size x 3).

    ``disease=None`` draws a healthy leaf; otherwise the name of a key in
    ``styles`` (``DISEASE_STYLES`` by default).  Classes with several styles
    pick one uniformly.
    """
    rng = np.random.default_rng(rng)
    styles = DISEASE_STYLES if styles is None else styles
    img = np.empty((size, size, 3))
    img[:] = BACKGROUND_RGB
    img += rng.normal(0, noise, (size, size, 1)) + rng.normal(0, 1.5, (size, size, 3))
    leaf, centre, axes = _leaf_geometry(size, rng)
    shade = rng.uniform(0.92, 1.08)
    img[leaf] = np.array(LEAF_RGB) * shade + rng.normal(0, noise, (int(leaf.sum()), 3))

    if disease is not None:
        options = styles[disease]
        style = options[rng.integers(len(options))]
        yy, xx = np.mgrid[:size, :size]
        tex = _texture(style.texture, style.period, (size, size), rng)
        lesion = np.zeros((size, size), dtype=bool)
        for _ in range(style.n_spots):
            ang, rad = rng.uniform(0, 2 * np.pi), np.sqrt(rng.uniform(0, 0.35))
            cy = centre[0] + rad * axes[1] * np.sin(ang)
            cx = centre[1] + rad * axes[0] * np.cos(ang)
            r = style.radius * rng.uniform(0.85, 1.15)
            lesion |= (yy - cy) ** 2 + (xx - cx) ** 2 <= r * r
        lesion &= leaf
        col = np.array(style.rgb) * rng.uniform(0.95, 1.05)
        img[lesion] = col + style.contrast * tex[lesion][:, None] / 2 + rng.normal(0, 3, (int(lesion.sum()), 3))
    return np.clip(np.floor(img + 0.5), 0, 255).astype(np.uint8)


def make_leaf_corpus(diseases=None, n_per_class=100, size=96, rng_seed=0, include_healthy=False):
    """Images and labels for a seeded synthetic corpus, in class order."""
    diseases = sorted(DISEASE_STYLES) if diseases is None else list(diseases)
    rng = np.random.default_rng(rng_seed)
    images, labels = [], []
    names = (["healthy"] if include_healthy else []) + diseases
    for name in names:
        for _ in range(n_per_class):
            images.append(make_leaf_image(None if name == "healthy" else name, rng, size))
            labels.append(name)
    return images, labels


def make_texture_disk(textured, rng=None, size=96):
    """Gate fixture: a green disk that is smooth or carries a fine dark checkerboard."""
    rng = np.random.default_rng(rng)
    yy, xx = np.mgrid[:size, :size]
    c = size / 2 + rng.uniform(-3, 3, 2)
    r = size * rng.uniform(0.3, 0.36)
    disk = (yy - c[0]) ** 2 + (xx - c[1]) ** 2 <= r * r
    img = np.empty((size, size, 3))
    img[:] = BACKGROUND_RGB
    img += rng.normal(0, 2, (size, size, 3))
    img[disk] = np.array(LEAF_RGB) * rng.uniform(0.92, 1.08) + rng.normal(0, 2, (int(disk.sum()), 3))
    if textured:
        period = int(rng.integers(3, 5))
        phase = rng.integers(0, period, 2)
        check = (((yy + phase[0]) // period) + ((xx + phase[1]) // period)) % 2 == 0
        img[disk & check] *= 0.45
    return np.clip(np.floor(img + 0.5), 0, 255).astype(np.uint8)
