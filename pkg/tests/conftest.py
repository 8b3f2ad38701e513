import numpy as np
import pytest
from hypothesis import HealthCheck, settings

settings.register_profile("default", deadline=None, max_examples=60,
                          suppress_health_check=[HealthCheck.too_slow])
settings.load_profile("default")


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def disk(shape, cy, cx, r):
    yy, xx = np.mgrid[:shape[0], :shape[1]]
    return (yy - cy) ** 2 + (xx - cx) ** 2 <= r * r


def write_corpus(root, classes, n_per_class, rng_seed=0, healthy_name="Leaf___healthy"):
    """Write a synthetic PPM corpus: one directory per class.

    ``classes`` are disease names; a healthy directory is added when
    ``healthy_name`` is set.  Returns the root path.
    """
    from leafsight.datasets import make_leaf_corpus
    from leafsight.io import save_ppm

    images, labels = make_leaf_corpus(classes, n_per_class, rng_seed=rng_seed,
                                      include_healthy=healthy_name is not None)
    for i, (img, lab) in enumerate(zip(images, labels)):
        d = healthy_name if lab == "healthy" else lab
        save_ppm(root / d / f"img_{i:03d}.ppm", img)
    return root


# Acceptance criteria report one line each; the lines are repeated in the
# terminal summary so they show up without ``-s``.
ACCEPTANCE_LINES = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES, key=lambda s: int(s.split()[1].rstrip(":"))):
            terminalreporter.write_line(line)
