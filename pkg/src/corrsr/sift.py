"""Scale-invariant feature extraction.

Four phases: Gaussian/difference-of-Gaussian scale-space construction,
3-D extremum detection with sub-pixel refinement and low-contrast/edge
rejection, dominant-orientation assignment, and 4x4x8 gradient-histogram
descriptor generation (128-d, normalized, 0.2-clamped, renormalized).

Intensities are scaled to [0, 1] inside the scale space, so the contrast
threshold is expressed on that range.  Angles use (x right, y down)
coordinates with orientation = atan2(gy, gx).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace

import numpy as np
from scipy import ndimage

from .interp import bicubic_resize

N_ORI_BINS = 36
ORI_SIGMA_FACTOR = 1.5
ORI_RADIUS_FACTOR = 3.0
ORI_PEAK_RATIO = 0.8
DESC_WIDTH = 4          # spatial subregions per side
DESC_ORI_BINS = 8
DESC_SCALE_FACTOR = 3.0  # pixels per subregion, in units of keypoint scale
DESC_CLAMP = 0.2
ASSUMED_INPUT_BLUR = 0.5
MAX_REFINE_STEPS = 5


@dataclass(frozen=True)
class SiftParams:
    """Detector/descriptor configuration (canonical defaults)."""

    octaves: int | None = None          # None: derived from image size
    scales_per_octave: int = 3
    sigma0: float = 1.6
    contrast_thresh: float = 0.03       # on [0, 1] intensities
    edge_ratio: float = 10.0
    upsample_first: bool = False


@dataclass
class Octave:
    index: int
    gaussians: np.ndarray   # (n_layers, h, w)
    dogs: np.ndarray        # (n_layers - 1, h, w)
    sigmas: np.ndarray      # absolute blur per gaussian layer, input-pixel units


@dataclass
class ScaleSpace:
    octaves: list[Octave]
    sigma0: float
    scales_per_octave: int


@dataclass
class Keypoint:
    octave: int
    layer: float            # refined DoG layer index
    y_oct: float            # octave-resolution coordinates
    x_oct: float
    x: float                # input-resolution coordinates
    y: float
    sigma: float            # absolute scale, input pixels
    sigma_rel: float        # scale at octave resolution
    response: float
    orientation: float | None = None


@dataclass
class SiftDescriptor:
    """128-d unit descriptor with location, scale, and orientation."""

    vector: np.ndarray
    x: float
    y: float
    scale: float
    orientation: float


def _gaussian_blur(img: np.ndarray, sigma: float) -> np.ndarray:
    """Separable Gaussian, kernel radius ceil(3 sigma), reflected borders."""
    if sigma <= 0:
        return img.copy()
    radius = int(math.ceil(3.0 * sigma))
    ax = np.arange(-radius, radius + 1, dtype=np.float64)
    kernel = np.exp(-(ax ** 2) / (2.0 * sigma ** 2))
    kernel /= kernel.sum()
    out = ndimage.correlate1d(img, kernel, axis=0, mode="reflect")
    return ndimage.correlate1d(out, kernel, axis=1, mode="reflect")


def default_octave_count(shape) -> int:
    """Octaves that keep the coarsest level at least 8 pixels on a side."""
    return max(1, int(math.floor(math.log2(min(shape) / 8.0))) + 1)


def build_scale_space(img, octaves: int | None = None, scales_per_octave: int = 3,
                      sigma0: float = 1.6) -> ScaleSpace:
    """Hierarchical Gaussian filtering and 2x down-sampling.

    Gaussian layer i of octave o carries absolute blur
    sigma0 * 2**(o + i / scales_per_octave); each octave holds
    scales_per_octave + 3 Gaussians and their adjacent differences.
    """
    arr = np.asarray(img, dtype=np.float64)
    if arr.ndim != 2:
        raise ValueError("scale space needs a 2-D raster")
    if min(arr.shape) < 32:
        raise ValueError(f"image too small for scale space: {arr.shape}")
    if scales_per_octave < 2:
        raise ValueError("scales_per_octave must be at least 2")
    if octaves is None:
        octaves = default_octave_count(arr.shape)
    if octaves < 1:
        raise ValueError("octaves must be at least 1")
    if min(arr.shape) // (2 ** (octaves - 1)) < 8:
        raise ValueError(f"image {arr.shape} too small for {octaves} octaves")

    base = arr / 255.0
    n_layers = scales_per_octave + 3
    k = 2.0 ** (1.0 / scales_per_octave)
    sig_rel = sigma0 * k ** np.arange(n_layers)
    increments = np.sqrt(np.maximum(sig_rel[1:] ** 2 - sig_rel[:-1] ** 2, 1e-12))

    first_blur = math.sqrt(max(sigma0 ** 2 - ASSUMED_INPUT_BLUR ** 2, 0.01))
    current = _gaussian_blur(base, first_blur)

    out: list[Octave] = []
    for o in range(octaves):
        layers = [current]
        for inc in increments:
            layers.append(_gaussian_blur(layers[-1], float(inc)))
        gaussians = np.stack(layers)
        dogs = gaussians[1:] - gaussians[:-1]
        sigmas = sigma0 * 2.0 ** (o + np.arange(n_layers) / scales_per_octave)
        out.append(Octave(index=o, gaussians=gaussians, dogs=dogs, sigmas=sigmas))
        current = layers[scales_per_octave][::2, ::2]
    return ScaleSpace(octaves=out, sigma0=sigma0, scales_per_octave=scales_per_octave)


def _strict_extrema(dogs: np.ndarray, floor: float) -> np.ndarray:
    """Indices (layer, y, x) of strict 26-neighbor extrema above the floor."""
    nd, h, w = dogs.shape
    if nd < 3 or h < 3 or w < 3:
        return np.empty((0, 3), dtype=np.int64)
    center = dogs[1:-1, 1:-1, 1:-1]
    is_max = np.ones(center.shape, dtype=bool)
    is_min = np.ones(center.shape, dtype=bool)
    for dl in (-1, 0, 1):
        for dy in (-1, 0, 1):
            for dx in (-1, 0, 1):
                if dl == 0 and dy == 0 and dx == 0:
                    continue
                neigh = dogs[1 + dl:nd - 1 + dl, 1 + dy:h - 1 + dy, 1 + dx:w - 1 + dx]
                is_max &= center > neigh
                is_min &= center < neigh
    cand = (is_max | is_min) & (np.abs(center) >= floor)
    coords = np.argwhere(cand)
    coords += 1
    return coords


def _refine_keypoint(dogs: np.ndarray, l: int, y: int, x: int):
    """Quadratic sub-sample fit; returns (l, y, x, offset, value) or None."""
    nd, h, w = dogs.shape
    for _ in range(MAX_REFINE_STEPS):
        g = np.array([
            (dogs[l + 1, y, x] - dogs[l - 1, y, x]) / 2.0,
            (dogs[l, y + 1, x] - dogs[l, y - 1, x]) / 2.0,
            (dogs[l, y, x + 1] - dogs[l, y, x - 1]) / 2.0,
        ])
        c = dogs[l, y, x]
        hll = dogs[l + 1, y, x] - 2 * c + dogs[l - 1, y, x]
        hyy = dogs[l, y + 1, x] - 2 * c + dogs[l, y - 1, x]
        hxx = dogs[l, y, x + 1] - 2 * c + dogs[l, y, x - 1]
        hly = (dogs[l + 1, y + 1, x] - dogs[l + 1, y - 1, x]
               - dogs[l - 1, y + 1, x] + dogs[l - 1, y - 1, x]) / 4.0
        hlx = (dogs[l + 1, y, x + 1] - dogs[l + 1, y, x - 1]
               - dogs[l - 1, y, x + 1] + dogs[l - 1, y, x - 1]) / 4.0
        hyx = (dogs[l, y + 1, x + 1] - dogs[l, y + 1, x - 1]
               - dogs[l, y - 1, x + 1] + dogs[l, y - 1, x - 1]) / 4.0
        hess = np.array([[hll, hly, hlx], [hly, hyy, hyx], [hlx, hyx, hxx]])
        try:
            offset = -np.linalg.solve(hess, g)
        except np.linalg.LinAlgError:
            return None
        if np.all(np.abs(offset) <= 0.5):
            value = c + 0.5 * float(g @ offset)
            return l, y, x, offset, value
        l += int(round(float(np.clip(offset[0], -1, 1))))
        y += int(round(float(np.clip(offset[1], -1, 1))))
        x += int(round(float(np.clip(offset[2], -1, 1))))
        if not (1 <= l < nd - 1 and 1 <= y < h - 1 and 1 <= x < w - 1):
            return None
    return None


def _edge_like(dogs: np.ndarray, l: int, y: int, x: int, edge_ratio: float) -> bool:
    c = dogs[l, y, x]
    dxx = dogs[l, y, x + 1] - 2 * c + dogs[l, y, x - 1]
    dyy = dogs[l, y + 1, x] - 2 * c + dogs[l, y - 1, x]
    dxy = (dogs[l, y + 1, x + 1] - dogs[l, y + 1, x - 1]
           - dogs[l, y - 1, x + 1] + dogs[l, y - 1, x - 1]) / 4.0
    tr = dxx + dyy
    det = dxx * dyy - dxy * dxy
    if det <= 0:
        return True
    return tr * tr * edge_ratio >= (edge_ratio + 1.0) ** 2 * det


def detect_extrema(ss: ScaleSpace, contrast_thresh: float = 0.03,
                   edge_ratio: float = 10.0) -> list[Keypoint]:
    """Strict 26-neighbor DoG extrema, sub-pixel refined and filtered.

    Rejects refined responses below contrast_thresh and edge responses
    whose principal-curvature ratio exceeds edge_ratio.
    """
    spo = ss.scales_per_octave
    keypoints: list[Keypoint] = []
    for octave in ss.octaves:
        dogs = octave.dogs
        seen = set()
        for l0, y0, x0 in _strict_extrema(dogs, 0.5 * contrast_thresh):
            refined = _refine_keypoint(dogs, int(l0), int(y0), int(x0))
            if refined is None:
                continue
            l, y, x, offset, value = refined
            if abs(value) < contrast_thresh:
                continue
            if _edge_like(dogs, l, y, x, edge_ratio):
                continue
            key = (l, y, x)
            if key in seen:
                continue
            seen.add(key)
            layer_f = l + float(offset[0])
            y_f = y + float(offset[1])
            x_f = x + float(offset[2])
            scale_mult = 2.0 ** octave.index
            sigma_rel = ss.sigma0 * 2.0 ** (layer_f / spo)
            keypoints.append(Keypoint(
                octave=octave.index, layer=layer_f, y_oct=y_f, x_oct=x_f,
                x=x_f * scale_mult, y=y_f * scale_mult,
                sigma=sigma_rel * scale_mult, sigma_rel=sigma_rel,
                response=float(value),
            ))
    return keypoints


def _window_gradients(layer: np.ndarray, y0: int, y1: int, x0: int, x1: int):
    """Gradient magnitude/angle for layer[y0:y1, x0:x1]; bounds are pre-checked."""
    patch = layer[y0 - 1:y1 + 1, x0 - 1:x1 + 1]
    gx = 0.5 * (patch[1:-1, 2:] - patch[1:-1, :-2])
    gy = 0.5 * (patch[2:, 1:-1] - patch[:-2, 1:-1])
    mag = np.hypot(gx, gy)
    ang = np.arctan2(gy, gx)
    return mag, ang


def _gaussian_layer(ss: ScaleSpace, kp: Keypoint) -> np.ndarray:
    octave = ss.octaves[kp.octave]
    idx = int(np.clip(round(kp.layer), 0, octave.gaussians.shape[0] - 1))
    return octave.gaussians[idx]


def assign_orientations(ss: ScaleSpace, kp: Keypoint) -> list[Keypoint]:
    """Dominant orientation(s) from a 36-bin Gaussian-weighted histogram.

    Histogram peaks at or above 80% of the maximum each yield an oriented
    copy of the keypoint; peak angles are refined parabolically.  Keypoints
    whose sampling window leaves the image are dropped.
    """
    layer = _gaussian_layer(ss, kp)
    h, w = layer.shape
    sigma_ori = ORI_SIGMA_FACTOR * kp.sigma_rel
    radius = max(1, int(round(ORI_RADIUS_FACTOR * sigma_ori)))
    yc, xc = int(round(kp.y_oct)), int(round(kp.x_oct))
    y0, y1 = yc - radius, yc + radius + 1
    x0, x1 = xc - radius, xc + radius + 1
    if y0 < 1 or x0 < 1 or y1 > h - 1 or x1 > w - 1:
        return []

    mag, ang = _window_gradients(layer, y0, y1, x0, x1)
    yy, xx = np.meshgrid(np.arange(y0, y1) - kp.y_oct,
                         np.arange(x0, x1) - kp.x_oct, indexing="ij")
    weight = np.exp(-(yy ** 2 + xx ** 2) / (2.0 * sigma_ori ** 2))

    bin_width = 2.0 * math.pi / N_ORI_BINS
    bins = np.rint(ang / bin_width).astype(np.int64) % N_ORI_BINS
    hist = np.zeros(N_ORI_BINS)
    np.add.at(hist, bins.ravel(), (mag * weight).ravel())

    for _ in range(2):
        hist = (np.roll(hist, 1) + 2.0 * hist + np.roll(hist, -1)) / 4.0

    peak = hist.max()
    if peak <= 0.0:
        return []
    out: list[Keypoint] = []
    for i in range(N_ORI_BINS):
        left, right = hist[(i - 1) % N_ORI_BINS], hist[(i + 1) % N_ORI_BINS]
        if hist[i] <= left or hist[i] <= right or hist[i] < ORI_PEAK_RATIO * peak:
            continue
        denom = left - 2.0 * hist[i] + right
        delta = 0.0 if denom == 0 else 0.5 * (left - right) / denom
        theta = ((i + delta) * bin_width) % (2.0 * math.pi)
        out.append(replace(kp, orientation=float(theta)))
    return out


def compute_descriptor(ss: ScaleSpace, kp: Keypoint) -> SiftDescriptor | None:
    """128-d descriptor: 4x4 spatial bins x 8 orientation bins.

    Samples are rotated into the keypoint frame, trilinearly binned,
    normalized, clamped at 0.2, and renormalized.  Returns None when the
    sample window has insufficient margin.
    """
    if kp.orientation is None:
        raise ValueError("keypoint has no orientation; run assign_orientations first")
    layer = _gaussian_layer(ss, kp)
    h, w = layer.shape
    hist_width = DESC_SCALE_FACTOR * kp.sigma_rel
    radius = int(round(hist_width * math.sqrt(2) * (DESC_WIDTH + 1) * 0.5))
    yc, xc = int(round(kp.y_oct)), int(round(kp.x_oct))
    y0, y1 = yc - radius, yc + radius + 1
    x0, x1 = xc - radius, xc + radius + 1
    if y0 < 1 or x0 < 1 or y1 > h - 1 or x1 > w - 1:
        return None

    mag, ang = _window_gradients(layer, y0, y1, x0, x1)
    yy, xx = np.meshgrid(np.arange(y0, y1) - kp.y_oct,
                         np.arange(x0, x1) - kp.x_oct, indexing="ij")
    cos_t, sin_t = math.cos(kp.orientation), math.sin(kp.orientation)
    x_rot = (cos_t * xx + sin_t * yy) / hist_width
    y_rot = (-sin_t * xx + cos_t * yy) / hist_width
    rbin = y_rot + DESC_WIDTH / 2.0 - 0.5
    cbin = x_rot + DESC_WIDTH / 2.0 - 0.5
    obin = ((ang - kp.orientation) % (2.0 * math.pi)) / (2.0 * math.pi) * DESC_ORI_BINS
    weight = mag * np.exp(-(x_rot ** 2 + y_rot ** 2) / (2.0 * (0.5 * DESC_WIDTH) ** 2))

    valid = (rbin > -1.0) & (rbin < DESC_WIDTH) & (cbin > -1.0) & (cbin < DESC_WIDTH)
    rbin, cbin, obin, weight = rbin[valid], cbin[valid], obin[valid], weight[valid]

    hist = np.zeros((DESC_WIDTH + 2, DESC_WIDTH + 2, DESC_ORI_BINS))
    r0 = np.floor(rbin).astype(np.int64)
    c0 = np.floor(cbin).astype(np.int64)
    o0 = np.floor(obin).astype(np.int64)
    dr, dc, do = rbin - r0, cbin - c0, obin - o0
    for ir in (0, 1):
        wr = weight * (dr if ir else 1.0 - dr)
        for ic in (0, 1):
            wc = wr * (dc if ic else 1.0 - dc)
            for io in (0, 1):
                wo = wc * (do if io else 1.0 - do)
                np.add.at(hist, (r0 + ir + 1, c0 + ic + 1, (o0 + io) % DESC_ORI_BINS), wo)

    vec = hist[1:-1, 1:-1, :].ravel()
    norm = np.linalg.norm(vec)
    if norm == 0.0:
        return None
    vec = vec / norm
    # Clamp and renormalize to a fixpoint so the final vector satisfies both
    # unit norm and the 0.2 component cap.
    for _ in range(100):
        clamped = np.minimum(vec, DESC_CLAMP)
        norm = np.linalg.norm(clamped)
        if norm == 0.0:
            return None
        vec = clamped / norm
        if vec.max() <= DESC_CLAMP + 1e-9:
            break
    return SiftDescriptor(vector=vec, x=kp.x, y=kp.y, scale=kp.sigma,
                          orientation=kp.orientation)


def extract(img, params: SiftParams | None = None) -> list[SiftDescriptor]:
    """Full pipeline: scale space, extrema, orientations, descriptors.

    Deterministic: the same image and parameters produce an identical
    descriptor list, sorted by (y, x, scale, orientation).
    """
    params = params or SiftParams()
    arr = np.asarray(img, dtype=np.float64)
    if arr.ndim != 2 or min(arr.shape) < 32:
        raise ValueError(f"image too small for feature extraction: {arr.shape}")

    coord_scale = 1.0
    if params.upsample_first:
        arr = bicubic_resize(arr, 2.0, edge="clamp", clamp=False)
        coord_scale = 0.5

    ss = build_scale_space(arr, octaves=params.octaves,
                           scales_per_octave=params.scales_per_octave,
                           sigma0=params.sigma0)
    descriptors: list[SiftDescriptor] = []
    for kp in detect_extrema(ss, params.contrast_thresh, params.edge_ratio):
        for oriented in assign_orientations(ss, kp):
            desc = compute_descriptor(ss, oriented)
            if desc is not None:
                if coord_scale != 1.0:
                    desc.x *= coord_scale
                    desc.y *= coord_scale
                    desc.scale *= coord_scale
                descriptors.append(desc)
    descriptors.sort(key=lambda d: (d.y, d.x, d.scale, d.orientation))
    return descriptors


def descriptor_matrix(descriptors: list[SiftDescriptor]) -> np.ndarray:
    """Stack descriptor vectors into an (n, 128) array."""
    if not descriptors:
        return np.zeros((0, 128))
    return np.stack([d.vector for d in descriptors])


def dump_descriptors(descriptors: list[SiftDescriptor]) -> str:
    """One record per line: x y scale orientation then 128 components."""
    lines = []
    for d in descriptors:
        head = f"{d.x:.6f} {d.y:.6f} {d.scale:.6f} {d.orientation:.6f}"
        body = " ".join(f"{v:.8f}" for v in d.vector)
        lines.append(head + " " + body)
    return "\n".join(lines) + ("\n" if lines else "")


def parse_descriptors(text: str) -> list[SiftDescriptor]:
    """Inverse of dump_descriptors."""
    out = []
    for line in text.splitlines():
        if not line.strip():
            continue
        parts = line.split()
        if len(parts) != 4 + 128:
            raise ValueError(f"descriptor record has {len(parts)} fields, expected 132")
        x, y, scale, orientation = (float(v) for v in parts[:4])
        vec = np.array([float(v) for v in parts[4:]])
        out.append(SiftDescriptor(vector=vec, x=x, y=y, scale=scale,
                                  orientation=orientation))
    return out
