"""FFT-based image registration.

Translation is recovered by phase correlation: the whitened cross-power
spectrum peaks at the relative shift.  Sub-pixel estimates come from a
two-stage schedule: a 2x spectral embedding gives a half-pixel estimate,
then (for upsampling factors above 2) a matrix-multiply DFT samples the
unwhitened cross-correlation on a 1.5x1.5-pixel neighborhood at 1/kappa
pitch, following Guizar-Sicairos-style upsampled cross-correlation.

Rotation and scale are pre-aligned by phase-correlating log-polar
resamplings of the windowed magnitude spectra, where both become
translations.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .interp import bicubic_resize, warp_rotate_scale

_WHITEN_EPS = 1e-12
REFINE_WINDOW = 1.5          # pixels searched around the 2x estimate
UNRELIABLE_ERROR = 0.9       # final error above this marks the result unreliable


@dataclass
class RegistrationResult:
    """Recovered transform of `moving` relative to `reference`.

    dy/dx are the translation in pixels (moving content sits at +dy/+dx),
    error is the normalized RMS registration error in [0, 1], and
    zero_shift_error is the same metric before any shift was applied.
    """

    dy: float
    dx: float
    error: float
    diffphase: float
    zero_shift_error: float
    rotation: float = 0.0
    scale: float = 1.0
    reliable: bool = True


@dataclass
class PrealignResult:
    rotation: float
    scale: float
    reliable: bool = True


def _signed_freqs(n: int) -> np.ndarray:
    return np.fft.fftfreq(n, d=1.0) * n


def matrix_dft_patch(spectrum, region_center, region_size, kappa: int) -> np.ndarray:
    """Inverse-DFT samples of `spectrum` on a local upsampled grid.

    Samples the correlation surface at pitch 1/kappa on a grid of
    round(region_size * kappa) points per axis centered on region_center
    (row, col), as two matrix products -- never via a full-size zero-padded
    inverse FFT.  With kappa=1, region_size equal to the full domain, and
    center (0, 0), the result equals fftshift(ifft2(spectrum)).
    """
    spec = np.asarray(spectrum, dtype=np.complex128)
    if spec.ndim != 2:
        raise ValueError("spectrum must be 2-D")
    if kappa < 1:
        raise ValueError("kappa must be at least 1")
    h, w = spec.shape
    cy, cx = (float(region_center[0]), float(region_center[1]))
    if np.isscalar(region_size):
        size_y = size_x = float(region_size)
    else:
        size_y, size_x = (float(region_size[0]), float(region_size[1]))
    n_y = max(1, int(round(size_y * kappa)))
    n_x = max(1, int(round(size_x * kappa)))

    ys = cy + (np.arange(n_y) - n_y // 2) / kappa
    xs = cx + (np.arange(n_x) - n_x // 2) / kappa
    fy = _signed_freqs(h)
    fx = _signed_freqs(w)
    row_kernel = np.exp(2j * np.pi * np.outer(ys, fy) / h)
    col_kernel = np.exp(2j * np.pi * np.outer(fx, xs) / w)
    # Split the unpaired Nyquist bin of even lengths so conjugate-symmetric
    # spectra interpolate to real values at fractional positions.
    if h % 2 == 0:
        row_kernel[:, h // 2] = np.cos(np.pi * ys)
    if w % 2 == 0:
        col_kernel[w // 2, :] = np.cos(np.pi * xs)
    return row_kernel @ spec @ col_kernel / (h * w)


def _correlation_at(spectrum: np.ndarray, dy: float, dx: float) -> complex:
    patch = matrix_dft_patch(spectrum, (dy, dx), (1.0 / 1.0, 1.0 / 1.0), 1)
    return complex(patch[0, 0])


def _wrap_centered(value: float, n: int) -> float:
    return (value + n / 2.0) % n - n / 2.0


def _embed_2x(spectrum: np.ndarray) -> np.ndarray:
    """Place the spectrum at the center of a 2x larger array (zero pad)."""
    h, w = spectrum.shape
    out = np.zeros((2 * h, 2 * w), dtype=np.complex128)
    shifted = np.fft.fftshift(spectrum)
    out[h - h // 2:h - h // 2 + h, w - w // 2:w - w // 2 + w] = shifted
    return np.fft.ifftshift(out)


def phase_correlate(reference, moving, kappa: int = 1) -> RegistrationResult:
    """Translation between equally sized rasters by phase correlation.

    kappa is the upsampling factor: 1 returns integer shifts, 2 adds the
    2x-embedding half-pixel stage, larger values refine by matrix-multiply
    DFT to 1/kappa-pixel pitch.  Constant (degenerate) inputs return a zero
    shift flagged unreliable.
    """
    ref = np.asarray(reference, dtype=np.float64)
    mov = np.asarray(moving, dtype=np.float64)
    if ref.shape != mov.shape:
        raise ValueError(f"dimension mismatch: {ref.shape} vs {mov.shape}")
    if ref.ndim != 2 or min(ref.shape) < 16:
        raise ValueError(f"need 2-D rasters of at least 16x16, got {ref.shape}")
    if kappa < 1:
        raise ValueError("kappa must be at least 1")
    h, w = ref.shape

    if np.ptp(ref) == 0.0 or np.ptp(mov) == 0.0:
        return RegistrationResult(dy=0.0, dx=0.0, error=1.0, diffphase=0.0,
                                  zero_shift_error=1.0, reliable=False)

    f_ref = np.fft.fft2(ref)
    f_mov = np.fft.fft2(mov)
    cross = np.conj(f_ref) * f_mov
    energy = (np.sum(np.abs(f_ref) ** 2) / (h * w)) * (np.sum(np.abs(f_mov) ** 2) / (h * w))

    def nrms_error(cc_value: complex) -> float:
        return math.sqrt(float(np.clip(1.0 - abs(cc_value) ** 2 / energy, 0.0, 1.0)))

    zero_shift_error = nrms_error(_correlation_at(cross, 0.0, 0.0))

    whitened = cross / np.maximum(np.abs(cross), _WHITEN_EPS)
    surface = np.fft.ifft2(whitened)
    peak = np.unravel_index(np.argmax(np.abs(surface)), surface.shape)
    dy = _wrap_centered(float(peak[0]), h)
    dx = _wrap_centered(float(peak[1]), w)

    if kappa >= 2:
        surface2 = np.fft.ifft2(_embed_2x(whitened))
        peak2 = np.unravel_index(np.argmax(np.abs(surface2)), surface2.shape)
        dy = _wrap_centered(float(peak2[0]), 2 * h) / 2.0
        dx = _wrap_centered(float(peak2[1]), 2 * w) / 2.0

    if kappa > 2:
        # Refine on the unwhitened correlation around the half-pixel estimate.
        dy = round(dy * kappa) / kappa
        dx = round(dx * kappa) / kappa
        patch = matrix_dft_patch(cross, (dy, dx), REFINE_WINDOW, kappa)
        loc = np.unravel_index(np.argmax(np.abs(patch)), patch.shape)
        n_samples = patch.shape[0]
        center = n_samples // 2
        dy += (loc[0] - center) / kappa
        dx += (loc[1] - patch.shape[1] // 2) / kappa
        cc_max = complex(patch[loc])
    else:
        cc_max = _correlation_at(cross, dy, dx)

    dy = _wrap_centered(dy, h)
    dx = _wrap_centered(dx, w)
    return RegistrationResult(dy=dy, dx=dx, error=nrms_error(cc_max),
                              diffphase=float(np.angle(cc_max)),
                              zero_shift_error=zero_shift_error)


def fourier_shift(img, dy: float, dx: float) -> np.ndarray:
    """Circularly shift raster content by (dy, dx) via a Fourier phase ramp.

    The unpaired Nyquist bin of even lengths takes the cosine of the shift,
    keeping the output of a real input real.
    """
    arr = np.asarray(img, dtype=np.float64)
    h, w = arr.shape
    ry = np.exp(-2j * np.pi * _signed_freqs(h) * dy / h)
    rx = np.exp(-2j * np.pi * _signed_freqs(w) * dx / w)
    if h % 2 == 0:
        ry[h // 2] = np.cos(np.pi * dy)
    if w % 2 == 0:
        rx[w // 2] = np.cos(np.pi * dx)
    ramp = np.outer(ry, rx)
    return np.real(np.fft.ifft2(np.fft.fft2(arr) * ramp))


# ---------------------------------------------------------------------------
# Log-polar rotation/scale pre-alignment
# ---------------------------------------------------------------------------


def _hann2d(shape) -> np.ndarray:
    return np.outer(np.hanning(shape[0]), np.hanning(shape[1]))


def _bilinear_sample(img: np.ndarray, ys: np.ndarray, xs: np.ndarray) -> np.ndarray:
    h, w = img.shape
    y0 = np.floor(ys).astype(np.int64)
    x0 = np.floor(xs).astype(np.int64)
    ty = ys - y0
    tx = xs - x0
    out = np.zeros(ys.shape)
    for dy_tap, dx_tap in ((0, 0), (0, 1), (1, 0), (1, 1)):
        yy = y0 + dy_tap
        xx = x0 + dx_tap
        inside = (yy >= 0) & (yy < h) & (xx >= 0) & (xx < w)
        wgt = (ty if dy_tap else 1.0 - ty) * (tx if dx_tap else 1.0 - tx)
        vals = np.zeros(ys.shape)
        vals[inside] = img[yy[inside], xx[inside]]
        out += wgt * vals
    return out


def _logpolar_spectrum(img: np.ndarray) -> np.ndarray:
    """Log-polar resampling of the windowed log-magnitude spectrum.

    Rows cover angles [0, pi) (spectral point symmetry halves the circle);
    columns cover radii [1, min(h, w)/2] with logarithmic spacing.
    """
    h, w = img.shape
    windowed = img * _hann2d(img.shape)
    mag = np.abs(np.fft.fftshift(np.fft.fft2(windowed)))
    feature = np.log1p(mag)
    cy, cx = h // 2, w // 2
    n_ang, n_rad = h, w
    r_max = min(h, w) / 2.0
    thetas = np.pi * np.arange(n_ang) / n_ang
    radii = np.exp(np.log(r_max) * np.arange(n_rad) / (n_rad - 1))
    ys = cy + radii[None, :] * np.sin(thetas)[:, None]
    xs = cx + radii[None, :] * np.cos(thetas)[:, None]
    return _bilinear_sample(feature, ys, xs)


def logpolar_prealign(reference, moving, kappa: int = 10,
                      rounds: int = 4) -> PrealignResult:
    """Recover (rotation, scale) of `moving` relative to `reference`.

    The log-polar shift estimate is applied and re-measured up to `rounds`
    times; residual estimates near the identity are nearly bias-free, so
    the composition converges well inside the grid resolution.

    Rotation is reported in (-pi/2, pi/2]: magnitude spectra are point
    symmetric, so the estimate carries an inherent 180-degree ambiguity
    that callers must resolve (register_to_query tries both hypotheses).
    Degenerate spectra return the identity flagged unreliable.
    """
    ref = np.asarray(reference, dtype=np.float64)
    mov = np.asarray(moving, dtype=np.float64)
    if ref.shape != mov.shape:
        raise ValueError(f"dimension mismatch: {ref.shape} vs {mov.shape}")
    if np.ptp(ref) == 0.0 or np.ptp(mov) == 0.0:
        return PrealignResult(rotation=0.0, scale=1.0, reliable=False)

    lp_ref = _logpolar_spectrum(ref)
    if np.ptp(lp_ref) == 0.0:
        return PrealignResult(rotation=0.0, scale=1.0, reliable=False)
    n_ang = ref.shape[0]
    n_rad = ref.shape[1]
    log_step = math.log(min(ref.shape) / 2.0) / (n_rad - 1)

    rotation, scale = 0.0, 1.0
    reliable = True
    for i in range(max(1, rounds)):
        current = mov if i == 0 else warp_rotate_scale(mov, -rotation, 1.0 / scale,
                                                       edge="zero")
        if np.ptp(current) == 0.0:
            reliable = False
            break
        lp_mov = _logpolar_spectrum(current)
        if np.ptp(lp_mov) == 0.0:
            reliable = False
            break
        shift = phase_correlate(lp_ref, lp_mov, kappa=kappa)
        reliable = reliable and shift.reliable
        d_rot = shift.dy * math.pi / n_ang
        d_scale = math.exp(-shift.dx * log_step)
        rotation += d_rot
        scale *= d_scale
        if abs(d_rot) < 1e-4 and abs(d_scale - 1.0) < 1e-4:
            break

    if not reliable:
        return PrealignResult(rotation=0.0, scale=1.0, reliable=False)
    # Fold into (-pi/2, pi/2].
    rotation = (rotation + math.pi / 2.0) % math.pi - math.pi / 2.0
    if rotation == -math.pi / 2.0:
        rotation = math.pi / 2.0
    return PrealignResult(rotation=rotation, scale=scale, reliable=True)


# ---------------------------------------------------------------------------
# Full per-candidate registration
# ---------------------------------------------------------------------------


def register_to_query(ulr, candidate, kappa: int = 20,
                      use_logpolar: bool = True) -> tuple[np.ndarray, RegistrationResult]:
    """Warp a retrieved candidate onto the upscaled-query frame.

    Resizes the candidate to the reference dimensions if needed, undoes the
    log-polar rotation/scale estimate (testing both halves of the 180-degree
    ambiguity and keeping the lower-error hypothesis), recovers the residual
    translation by phase correlation, and applies the sub-pixel shift in the
    Fourier domain.  Frame regions the candidate never observed (rotation
    corners, translation wrap bands) are filled from the reference so
    downstream patch harvesting sees no fictitious content.  Returns the
    registered raster and the composite result.
    """
    ref = np.asarray(ulr, dtype=np.float64)
    cand = np.asarray(candidate, dtype=np.float64)
    if cand.shape != ref.shape:
        from .interp import ZoomSpec
        spec = ZoomSpec(s=ref.shape[1] / cand.shape[1],
                        out_width=ref.shape[1], out_height=ref.shape[0])
        cand = bicubic_resize(cand, spec, edge="clamp")

    if use_logpolar:
        pre = logpolar_prealign(ref, cand)
    else:
        pre = PrealignResult(rotation=0.0, scale=1.0, reliable=True)

    # The identity competes against both halves of the 180-degree ambiguity;
    # prealign noise on pure translations must not force a lossy resample.
    hypotheses = [(0.0, 1.0)]
    if use_logpolar and (pre.rotation != 0.0 or pre.scale != 1.0):
        hypotheses.append((pre.rotation, pre.scale))
        hypotheses.append((pre.rotation + math.pi, pre.scale))

    best = None
    for theta, sigma in hypotheses:
        warped = warp_rotate_scale(cand, -theta, 1.0 / sigma, edge="zero")
        shift = phase_correlate(ref, warped, kappa=kappa)
        if best is None or shift.error < best[3].error:
            best = (theta, sigma, warped, shift)
    theta, sigma, warped, shift = best

    aligned = fourier_shift(warped, -shift.dy, -shift.dx)
    observed = _observed_mask(ref.shape, theta, sigma, shift.dy, shift.dx)
    aligned = np.where(observed, aligned, ref)
    theta_wrapped = (theta + math.pi) % (2.0 * math.pi) - math.pi
    reliable = pre.reliable and shift.reliable and shift.error <= UNRELIABLE_ERROR
    result = RegistrationResult(
        dy=shift.dy, dx=shift.dx, error=shift.error, diffphase=shift.diffphase,
        zero_shift_error=shift.zero_shift_error, rotation=theta_wrapped,
        scale=sigma, reliable=reliable,
    )
    return aligned, result


def _observed_mask(shape, theta: float, sigma: float, dy: float, dx: float) -> np.ndarray:
    """True where the registered frame actually shows candidate content.

    Propagates a coverage indicator through the same rotate/scale warp, then
    invalidates the circular wrap band of the translation (with a one-pixel
    guard for the sub-pixel interpolation support).
    """
    ones = np.ones(shape)
    if theta == 0.0 and sigma == 1.0:
        cover = ones
    else:
        cover = warp_rotate_scale(ones, -theta, 1.0 / sigma, edge="zero")
    mask = cover > 0.999
    h, w = shape
    iy = int(math.floor(-dy)) if dy < 0 else int(math.ceil(-dy))
    ix = int(math.floor(-dx)) if dx < 0 else int(math.ceil(-dx))
    mask = np.roll(mask, (iy, ix), axis=(0, 1))
    guard_y = abs(iy) + (1 if dy != int(dy) else 0)
    guard_x = abs(ix) + (1 if dx != int(dx) else 0)
    if dy > 0:
        mask[h - guard_y:, :] = False
    elif dy < 0:
        mask[:guard_y, :] = False
    if dx > 0:
        mask[:, w - guard_x:] = False
    elif dx < 0:
        mask[:, :guard_x] = False
    return mask


def register_candidates(ulr, candidates, kappa: int = 20, use_logpolar: bool = True):
    """Independently register each candidate; order follows the input."""
    return [register_to_query(ulr, cand, kappa=kappa, use_logpolar=use_logpolar)
            for cand in candidates]
