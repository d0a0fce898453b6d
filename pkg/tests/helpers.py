"""Shared independent oracles and experiment helpers for the test suite."""

import math

import numpy as np

from corrsr.interp import lagrange_weights, neighborhood4x4


def oracle_psnr(ref, tst):
    """Direct double-loop summation, independent of np.mean."""
    h, w = ref.shape
    acc = 0.0
    for r in range(h):
        for c in range(w):
            d = ref[r, c] - tst[r, c]
            acc += d * d
    mse = acc / (h * w)
    if mse == 0:
        return math.inf
    return 10.0 * math.log10(255.0 ** 2 / mse)


def oracle_ssim(ref, tst):
    """Per-window loop with explicitly centered moments."""
    half = 5
    ax = np.arange(-half, half + 1, dtype=float)
    g = np.exp(-(ax ** 2) / (2 * 1.5 ** 2))
    win = np.outer(g, g)
    win /= win.sum()
    c1 = (0.01 * 255) ** 2
    c2 = (0.03 * 255) ** 2
    h, w = ref.shape
    vals = []
    for r in range(half, h - half):
        for c in range(half, w - half):
            a = ref[r - half:r + half + 1, c - half:c + half + 1]
            b = tst[r - half:r + half + 1, c - half:c + half + 1]
            mu_a = np.sum(win * a)
            mu_b = np.sum(win * b)
            va = np.sum(win * (a - mu_a) ** 2)
            vb = np.sum(win * (b - mu_b) ** 2)
            cov = np.sum(win * (a - mu_a) * (b - mu_b))
            vals.append(((2 * mu_a * mu_b + c1) * (2 * cov + c2))
                        / ((mu_a ** 2 + mu_b ** 2 + c1) * (va + vb + c2)))
    return float(np.mean(vals))


def oracle_resize(src, s, out_h, out_w, edge="zero"):
    """Scalar reference resize: per output pixel, gather the 4x4 neighborhood
    and apply the product of one-dimensional Lagrange weights."""
    out = np.zeros((out_h, out_w))
    knots = np.arange(-1.0, 3.0)
    for y in range(out_h):
        for x in range(out_w):
            ys = (y + 0.5) / s - 0.5
            xs = (x + 0.5) / s - 0.5
            r = int(np.floor(ys))
            c = int(np.floor(xs))
            block = neighborhood4x4(src, r, c, edge=edge)
            wy = lagrange_weights(ys - r, knots)
            wx = lagrange_weights(xs - c, knots)
            out[y, x] = float(wy @ block @ wx)
    return out


def acceptance_line(number, passed, detail):
    status = "PASS" if passed else "FAIL"
    print(f"[ACCEPTANCE {number}] {status}: {detail}")
