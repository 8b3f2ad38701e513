"""Small dense eigenvalue solver (Hessenberg reduction + shifted QR)."""
import math

import numpy as np


def hessenberg(a):
    """Upper Hessenberg form of ``a`` by Householder similarity transforms."""
    h = np.array(a, dtype=np.float64)
    n = h.shape[0]
    for k in range(n - 2):
        x = h[k + 1:, k].copy()
        norm_x = np.linalg.norm(x)
        if norm_x == 0.0:
            continue
        alpha = -norm_x if x[0] >= 0 else norm_x
        v = x
        v[0] -= alpha
        norm_v = np.linalg.norm(v)
        if norm_v == 0.0:
            continue
        v /= norm_v
        h[k + 1:, :] -= 2.0 * np.outer(v, v @ h[k + 1:, :])
        h[:, k + 1:] -= 2.0 * np.outer(h[:, k + 1:] @ v, v)
        h[k + 2:, k] = 0.0
    return h


def _wilkinson_shift(a, b, c, d):
    # eigenvalue of [[a, b], [c, d]] closest to d; real part if complex
    tr = a + d
    det = a * d - b * c
    disc = tr * tr / 4.0 - det
    if disc < 0:
        return tr / 2.0
    root = math.sqrt(disc)
    l1, l2 = tr / 2.0 + root, tr / 2.0 - root
    return l1 if abs(l1 - d) < abs(l2 - d) else l2


def _qr_step(h, lo, hi, shift):
    """One explicit shifted QR step on the block h[lo:hi+1, lo:hi+1] (in place)."""
    m = hi - lo + 1
    block = h[lo:hi + 1, lo:hi + 1]
    block -= shift * np.eye(m)
    rots = []
    for k in range(m - 1):
        x, y = block[k, k], block[k + 1, k]
        r = math.hypot(x, y)
        if r == 0.0:
            c, s = 1.0, 0.0
        else:
            c, s = x / r, y / r
        rots.append((c, s))
        rk, rk1 = block[k, :].copy(), block[k + 1, :].copy()
        block[k, :] = c * rk + s * rk1
        block[k + 1, :] = -s * rk + c * rk1
    for k, (c, s) in enumerate(rots):
        ck, ck1 = block[:, k].copy(), block[:, k + 1].copy()
        block[:, k] = c * ck + s * ck1
        block[:, k + 1] = -s * ck + c * ck1
    block += shift * np.eye(m)


def real_eigenvalues(a, tol=1e-10, max_iter=500):
    """Eigenvalues of a square matrix known to have a real spectrum.

    Returned in descending order.  Iteration stops when every subdiagonal
    entry is below ``tol`` relative to its diagonal neighbours or after
    ``max_iter`` QR steps, whichever comes first; in the latter case the
    current diagonal is returned as the estimate.
    """
    h = hessenberg(a)
    n = h.shape[0]
    if n == 0:
        return np.empty(0)
    hi = n - 1
    it = 0
    while hi > 0 and it < max_iter:
        # deflate negligible subdiagonals
        for k in range(1, hi + 1):
            scale = abs(h[k, k]) + abs(h[k - 1, k - 1])
            if abs(h[k, k - 1]) <= tol * (scale if scale > 0 else 1.0):
                h[k, k - 1] = 0.0
        if h[hi, hi - 1] == 0.0:
            hi -= 1
            continue
        lo = hi - 1
        while lo > 0 and h[lo, lo - 1] != 0.0:
            lo -= 1
        if hi - lo == 1:
            # 2x2 block: closed form
            a_, b_, c_, d_ = h[lo, lo], h[lo, hi], h[hi, lo], h[hi, hi]
            tr, det = a_ + d_, a_ * d_ - b_ * c_
            root = math.sqrt(max(tr * tr / 4.0 - det, 0.0))
            h[lo, lo], h[hi, hi] = tr / 2.0 + root, tr / 2.0 - root
            h[hi, lo] = 0.0
            hi -= 2
            continue
        shift = _wilkinson_shift(h[hi - 1, hi - 1], h[hi - 1, hi], h[hi, hi - 1], h[hi, hi])
        _qr_step(h, lo, hi, shift)
        it += 1
    return np.sort(np.diag(h))[::-1]
