"""Deterministic synthetic test scenes.

Multi-scale value noise plus a scattering of soft discs and oriented bars
produces textured, feature-rich rasters that behave like small natural
images.  Everything is seeded, so corpora regenerate bit-identically for
tests and demos.
"""

from __future__ import annotations

import numpy as np

from .interp import ZoomSpec, bicubic_resize

# (cell size in px, amplitude in gray levels)
_NOISE_CELLS = ((64, 32.0), (32, 28.0), (16, 24.0), (8, 20.0), (4, 16.0), (2, 10.0))


def _value_noise(rng: np.random.Generator, shape, cell: int) -> np.ndarray:
    h, w = shape
    gh = max(4, h // cell + 2)
    gw = max(4, w // cell + 2)
    grid = rng.uniform(-1.0, 1.0, size=(gh, gw))
    spec = ZoomSpec(s=max(h / gh, w / gw) + 1.0,
                    out_width=int(gw * (max(h / gh, w / gw) + 1.0)),
                    out_height=int(gh * (max(h / gh, w / gw) + 1.0)))
    up = bicubic_resize(grid * 100.0 + 128.0, spec, edge="clamp", clamp=False)
    return (up[:h, :w] - 128.0) / 100.0


def _soft_disc(shape, cy, cx, radius, softness=1.5) -> np.ndarray:
    h, w = shape
    yy, xx = np.meshgrid(np.arange(h, dtype=np.float64),
                         np.arange(w, dtype=np.float64), indexing="ij")
    dist = np.hypot(yy - cy, xx - cx)
    return np.clip((radius - dist) / softness + 0.5, 0.0, 1.0)


def _soft_bar(shape, cy, cx, angle, length, width, softness=1.2) -> np.ndarray:
    h, w = shape
    yy, xx = np.meshgrid(np.arange(h, dtype=np.float64) - cy,
                         np.arange(w, dtype=np.float64) - cx, indexing="ij")
    u = np.cos(angle) * xx + np.sin(angle) * yy
    v = -np.sin(angle) * xx + np.cos(angle) * yy
    along = np.clip((length / 2.0 - np.abs(u)) / softness + 0.5, 0.0, 1.0)
    across = np.clip((width / 2.0 - np.abs(v)) / softness + 0.5, 0.0, 1.0)
    return along * across


def textured_scene(seed: int, shape=(256, 256), lo: float = 10.0,
                   hi: float = 245.0, sharpness: float = 0.0) -> np.ndarray:
    """A reproducible textured raster with blob, edge, and corner structure.

    Component amplitudes are fixed (not range-normalized) so local contrast
    survives; values are clipped into [lo, hi].  sharpness > 0 adds
    pixel-scale detail (fine speckle) that plain interpolation cannot
    recover, for super-resolution experiments.
    """
    rng = np.random.default_rng(seed)
    h, w = shape
    img = np.full((h, w), 127.5)
    for cell, amplitude in _NOISE_CELLS:
        img += amplitude * _value_noise(rng, shape, cell)
    if sharpness > 0.0:
        # Hard-edged geometry: lost by plain interpolation, learnable by
        # example-based reconstruction (unlike random speckle).
        n_hard = int(sharpness * (0.0025 * h * w + 10))
        for _ in range(n_hard):
            cy = float(rng.uniform(0.04 * h, 0.96 * h))
            cx = float(rng.uniform(0.04 * w, 0.96 * w))
            amp = float(rng.choice((-1.0, 1.0)) * rng.uniform(35.0, 80.0))
            if rng.uniform() < 0.5:
                radius = float(rng.uniform(1.5, 6.0))
                img += amp * _soft_disc((h, w), cy, cx, radius, softness=0.5)
            else:
                angle = float(rng.uniform(0, np.pi))
                length = float(rng.uniform(6.0, 0.2 * min(h, w)))
                width = float(rng.uniform(1.5, 4.0))
                img += amp * _soft_bar((h, w), cy, cx, angle, length, width,
                                       softness=0.5)

    n_discs = int(rng.integers(6, 10))
    for _ in range(n_discs):
        cy = float(rng.uniform(0.12 * h, 0.88 * h))
        cx = float(rng.uniform(0.12 * w, 0.88 * w))
        radius = float(rng.uniform(min(h, w) * 0.03, min(h, w) * 0.12))
        img += float(rng.uniform(-60, 60)) * _soft_disc((h, w), cy, cx, radius)

    # Small sharp spots: blob-like detail at fine scales, amplitudes kept
    # away from zero so their band-pass response clears detection thresholds.
    n_spots = int(rng.integers(0.0020 * h * w, 0.0035 * h * w) + 12)
    for _ in range(n_spots):
        cy = float(rng.uniform(0.05 * h, 0.95 * h))
        cx = float(rng.uniform(0.05 * w, 0.95 * w))
        radius = float(rng.uniform(1.5, 5.5))
        amp = float(rng.choice((-1.0, 1.0)) * rng.uniform(40.0, 90.0))
        img += amp * _soft_disc((h, w), cy, cx, radius, softness=1.0)

    n_bars = int(rng.integers(3, 6))
    for _ in range(n_bars):
        cy = float(rng.uniform(0.15 * h, 0.85 * h))
        cx = float(rng.uniform(0.15 * w, 0.85 * w))
        angle = float(rng.uniform(0, np.pi))
        length = float(rng.uniform(min(h, w) * 0.15, min(h, w) * 0.45))
        width = float(rng.uniform(2.0, 7.0))
        img += float(rng.uniform(-50, 50)) * _soft_bar((h, w), cy, cx, angle,
                                                       length, width)

    return np.clip(img, lo, hi)


def desk_corpus(count: int, shape=(128, 128), base_seed: int = 100) -> list[np.ndarray]:
    """A list of distinct textured scenes for desk-scale experiments."""
    return [textured_scene(base_seed + i, shape) for i in range(count)]


def _stamp_library(seed: int, count: int = 12, size: int = 12) -> list[np.ndarray]:
    rng = np.random.default_rng(seed)
    stamps = []
    for _ in range(count):
        stamp = np.zeros((size, size))
        for _ in range(int(rng.integers(2, 5))):
            cy = float(rng.uniform(2, size - 2))
            cx = float(rng.uniform(2, size - 2))
            if rng.uniform() < 0.5:
                stamp += float(rng.uniform(0.4, 1.0)) * _soft_disc(
                    (size, size), cy, cx, float(rng.uniform(1.2, 3.5)), softness=0.5)
            else:
                stamp += float(rng.uniform(0.4, 1.0)) * _soft_bar(
                    (size, size), cy, cx, float(rng.uniform(0, np.pi)),
                    float(rng.uniform(4, size - 2)), float(rng.uniform(1.2, 2.5)),
                    softness=0.5)
        peak = np.abs(stamp).max()
        if peak > 0:
            stamp /= peak
        stamps.append(stamp)
    return stamps


def motif_scene(seed: int, shape=(128, 128), library_seed: int = 77,
                n_stamps: int | None = None, align: int = 1, lo: float = 10.0,
                hi: float = 245.0) -> np.ndarray:
    """A scene assembled from a shared library of sharp stamps.

    Scenes with the same library_seed reuse identical motifs at different
    positions and contrasts, so fine detail learned from some scenes
    transfers to the others; useful for exemplar-transfer experiments.
    With align=2 stamp origins snap to even pixels, which keeps every motif
    instance on the same downsampling phase (pixel-art-like content).
    """
    rng = np.random.default_rng(seed)
    h, w = shape
    stamps = _stamp_library(library_seed)
    img = np.full((h, w), 127.5)
    img += 24.0 * _value_noise(rng, shape, 64)
    img += 18.0 * _value_noise(rng, shape, 32)
    if n_stamps is None:
        n_stamps = int(0.0045 * h * w)
    size = stamps[0].shape[0]
    for _ in range(n_stamps):
        stamp = stamps[int(rng.integers(len(stamps)))]
        y = align * int(rng.integers(0, (h - size) // align))
        x = align * int(rng.integers(0, (w - size) // align))
        amp = float(rng.choice((-1.0, 1.0)) * rng.uniform(45.0, 90.0))
        img[y:y + size, x:x + size] += amp * stamp
    return np.clip(img, lo, hi)


def center_crop(img: np.ndarray, fraction: float) -> np.ndarray:
    """Centered crop keeping the given fraction of each dimension."""
    h, w = img.shape
    ch, cw = int(round(h * fraction)), int(round(w * fraction))
    y0, x0 = (h - ch) // 2, (w - cw) // 2
    return img[y0:y0 + ch, x0:x0 + cw].copy()
