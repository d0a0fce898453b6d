"""Raster containers, image file I/O, color handling, and quality metrics.

Conventions used across the package:

* a grayscale raster ("luma raster") is a 2-D float64 array of shape
  (height, width) with values nominally in [0, 255];
* an RGB raster is a 3-D float64 array of shape (height, width, 3).

All analysis (feature extraction, registration, super-resolution) runs on
the Rec.601 luma channel; chroma is handled separately by the pipeline.
"""

from __future__ import annotations

import math
import struct
import zlib
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from scipy import ndimage

# Rec.601 luma coefficients.
_LUMA_R = 0.299
_LUMA_G = 0.587
_LUMA_B = 0.114

# SSIM constants: 11x11 Gaussian window, sigma 1.5, K1/K2 stabilizers, 8-bit range.
SSIM_WINDOW = 11
SSIM_SIGMA = 1.5
SSIM_K1 = 0.01
SSIM_K2 = 0.03
SSIM_L = 255.0

_PNG_SIGNATURE = b"\x89PNG\r\n\x1a\n"


class ImageFormatError(ValueError):
    """The file is readable but not a supported image format."""


class ImageDecodeError(ValueError):
    """The file claims a supported format but its stream is corrupt."""


@dataclass(frozen=True)
class QualityReport:
    """PSNR (dB, math.inf for identical inputs) and SSIM in [-1, 1]."""

    psnr: float
    ssim: float


def as_gray(img) -> np.ndarray:
    """Validate and return a 2-D float64 luma raster."""
    arr = np.asarray(img, dtype=np.float64)
    if arr.ndim != 2:
        raise ValueError(f"expected 2-D raster, got shape {arr.shape}")
    if arr.size == 0:
        raise ValueError("empty raster")
    if not np.all(np.isfinite(arr)):
        raise ValueError("raster contains non-finite values")
    return arr


def as_rgb(img) -> np.ndarray:
    """Validate and return an (H, W, 3) float64 RGB raster."""
    arr = np.asarray(img, dtype=np.float64)
    if arr.ndim != 3 or arr.shape[2] != 3:
        raise ValueError(f"expected (H, W, 3) raster, got shape {arr.shape}")
    if arr.size == 0:
        raise ValueError("empty raster")
    if not np.all(np.isfinite(arr)):
        raise ValueError("raster contains non-finite values")
    return arr


def to_luma(img) -> np.ndarray:
    """Rec.601 luma: Y = 0.299 R + 0.587 G + 0.114 B."""
    rgb = as_rgb(img)
    return _LUMA_R * rgb[:, :, 0] + _LUMA_G * rgb[:, :, 1] + _LUMA_B * rgb[:, :, 2]


def rgb_to_ycbcr(img) -> np.ndarray:
    """RGB -> YCbCr (Rec.601, full-range, chroma offset +128)."""
    rgb = as_rgb(img)
    y = _LUMA_R * rgb[:, :, 0] + _LUMA_G * rgb[:, :, 1] + _LUMA_B * rgb[:, :, 2]
    cb = 128.0 + 0.564 * (rgb[:, :, 2] - y)
    cr = 128.0 + 0.713 * (rgb[:, :, 0] - y)
    return np.stack([y, cb, cr], axis=2)


def ycbcr_to_rgb(img) -> np.ndarray:
    """Inverse of rgb_to_ycbcr; output is not clipped."""
    ycc = as_rgb(img)
    y = ycc[:, :, 0]
    cb = ycc[:, :, 1] - 128.0
    cr = ycc[:, :, 2] - 128.0
    r = y + cr / 0.713
    b = y + cb / 0.564
    g = (y - _LUMA_R * r - _LUMA_B * b) / _LUMA_G
    return np.stack([r, g, b], axis=2)


def is_grayscale(rgb) -> bool:
    arr = as_rgb(rgb)
    return bool(np.all(arr[:, :, 0] == arr[:, :, 1]) and np.all(arr[:, :, 1] == arr[:, :, 2]))


# ---------------------------------------------------------------------------
# Quality metrics
# ---------------------------------------------------------------------------


def psnr(reference, test) -> float:
    """Peak signal-to-noise ratio in dB against a 255 peak.

    Identical inputs (zero MSE) return math.inf rather than dividing by zero.
    """
    ref = as_gray(reference)
    tst = as_gray(test)
    if ref.shape != tst.shape:
        raise ValueError(f"dimension mismatch: {ref.shape} vs {tst.shape}")
    mse = float(np.mean((ref - tst) ** 2))
    if mse == 0.0:
        return math.inf
    return 10.0 * math.log10(255.0 ** 2 / mse)


def _ssim_window() -> np.ndarray:
    half = SSIM_WINDOW // 2
    ax = np.arange(-half, half + 1, dtype=np.float64)
    g1 = np.exp(-(ax ** 2) / (2.0 * SSIM_SIGMA ** 2))
    kernel = np.outer(g1, g1)
    return kernel / kernel.sum()


def ssim(reference, test) -> float:
    """Mean local SSIM over 11x11 Gaussian windows (sigma 1.5).

    Uses K1=0.01, K2=0.03, L=255.  Only fully interior windows contribute;
    both images must be at least 11x11.
    """
    ref = as_gray(reference)
    tst = as_gray(test)
    if ref.shape != tst.shape:
        raise ValueError(f"dimension mismatch: {ref.shape} vs {tst.shape}")
    half = SSIM_WINDOW // 2
    if min(ref.shape) < SSIM_WINDOW:
        raise ValueError(f"image smaller than {SSIM_WINDOW}x{SSIM_WINDOW} SSIM window")

    kernel = _ssim_window()

    def local_mean(a):
        return ndimage.correlate(a, kernel, mode="constant")[half:-half, half:-half]

    c1 = (SSIM_K1 * SSIM_L) ** 2
    c2 = (SSIM_K2 * SSIM_L) ** 2

    mu_r = local_mean(ref)
    mu_t = local_mean(tst)
    # Uncentered second moments; identical code paths keep ssim(a, a) == 1 exact.
    var_r = local_mean(ref * ref) - mu_r * mu_r
    var_t = local_mean(tst * tst) - mu_t * mu_t
    cov = local_mean(ref * tst) - mu_r * mu_t

    num = (2.0 * mu_r * mu_t + c1) * (2.0 * cov + c2)
    den = (mu_r * mu_r + mu_t * mu_t + c1) * (var_r + var_t + c2)
    return float(np.mean(num / den))


def measure_quality(reference, test) -> QualityReport:
    return QualityReport(psnr=psnr(reference, test), ssim=ssim(reference, test))


# ---------------------------------------------------------------------------
# PNG (subset: 8/16-bit, grayscale or RGB, non-interlaced)
# ---------------------------------------------------------------------------


def _png_chunk(tag: bytes, payload: bytes) -> bytes:
    crc = zlib.crc32(tag + payload) & 0xFFFFFFFF
    return struct.pack(">I", len(payload)) + tag + payload + struct.pack(">I", crc)


def _write_png(path: Path, arr: np.ndarray) -> None:
    data = np.clip(np.rint(arr), 0, 255).astype(np.uint8)
    if data.ndim == 2:
        color_type, channels = 0, 1
        h, w = data.shape
    else:
        color_type, channels = 2, 3
        h, w = data.shape[:2]
    ihdr = struct.pack(">IIBBBBB", w, h, 8, color_type, 0, 0, 0)
    raw = data.reshape(h, w * channels)
    # Filter byte 0 (None) per scanline.
    scanlines = b"".join(b"\x00" + raw[row].tobytes() for row in range(h))
    payload = zlib.compress(scanlines, level=6)
    with open(path, "wb") as fh:
        fh.write(_PNG_SIGNATURE)
        fh.write(_png_chunk(b"IHDR", ihdr))
        fh.write(_png_chunk(b"IDAT", payload))
        fh.write(_png_chunk(b"IEND", b""))


def _paeth(a: int, b: int, c: int) -> int:
    p = a + b - c
    pa, pb, pc = abs(p - a), abs(p - b), abs(p - c)
    if pa <= pb and pa <= pc:
        return a
    if pb <= pc:
        return b
    return c


def _unfilter_scanlines(raw: bytes, h: int, w: int, channels: int, bytes_per_sample: int) -> np.ndarray:
    bpp = channels * bytes_per_sample
    stride = w * bpp
    if len(raw) != h * (stride + 1):
        raise ImageDecodeError("PNG stream has wrong scanline length")
    out = np.zeros((h, stride), dtype=np.uint8)
    prev = np.zeros(stride, dtype=np.uint8)
    pos = 0
    for row in range(h):
        ftype = raw[pos]
        line = np.frombuffer(raw, dtype=np.uint8, count=stride, offset=pos + 1).copy()
        pos += stride + 1
        if ftype == 0:
            recon = line
        elif ftype == 1:  # Sub
            recon = line.astype(np.int64)
            for i in range(bpp, stride):
                recon[i] = (recon[i] + recon[i - bpp]) & 0xFF
            recon = recon.astype(np.uint8)
        elif ftype == 2:  # Up
            recon = (line.astype(np.int64) + prev) % 256
            recon = recon.astype(np.uint8)
        elif ftype == 3:  # Average
            recon = np.zeros(stride, dtype=np.int64)
            for i in range(stride):
                left = recon[i - bpp] if i >= bpp else 0
                recon[i] = (line[i] + (left + int(prev[i])) // 2) & 0xFF
            recon = recon.astype(np.uint8)
        elif ftype == 4:  # Paeth
            recon = np.zeros(stride, dtype=np.int64)
            for i in range(stride):
                left = int(recon[i - bpp]) if i >= bpp else 0
                up = int(prev[i])
                ul = int(prev[i - bpp]) if i >= bpp else 0
                recon[i] = (line[i] + _paeth(left, up, ul)) & 0xFF
            recon = recon.astype(np.uint8)
        else:
            raise ImageDecodeError(f"unknown PNG filter type {ftype}")
        out[row] = recon
        prev = out[row]
    return out


def _read_png(path: Path) -> np.ndarray:
    blob = path.read_bytes()
    if not blob.startswith(_PNG_SIGNATURE):
        raise ImageFormatError(f"{path}: not a PNG file")
    pos = len(_PNG_SIGNATURE)
    ihdr = None
    idat = b""
    try:
        while pos < len(blob):
            length, tag = struct.unpack(">I4s", blob[pos:pos + 8])
            payload = blob[pos + 8:pos + 8 + length]
            if len(payload) != length:
                raise ImageDecodeError(f"{path}: truncated PNG chunk")
            pos += 12 + length
            if tag == b"IHDR":
                ihdr = struct.unpack(">IIBBBBB", payload)
            elif tag == b"IDAT":
                idat += payload
            elif tag == b"IEND":
                break
    except struct.error as exc:
        raise ImageDecodeError(f"{path}: truncated PNG stream") from exc
    if ihdr is None:
        raise ImageDecodeError(f"{path}: missing IHDR")
    w, h, bit_depth, color_type, _, _, interlace = ihdr
    if interlace != 0:
        raise ImageFormatError(f"{path}: interlaced PNG not supported")
    if bit_depth not in (8, 16) or color_type not in (0, 2):
        raise ImageFormatError(
            f"{path}: unsupported PNG (bit depth {bit_depth}, color type {color_type})"
        )
    channels = 1 if color_type == 0 else 3
    try:
        raw = zlib.decompress(idat)
    except zlib.error as exc:
        raise ImageDecodeError(f"{path}: corrupt PNG data stream") from exc
    plane = _unfilter_scanlines(raw, h, w, channels, bit_depth // 8)
    if bit_depth == 8:
        arr = plane.reshape(h, w, channels).astype(np.float64)
    else:
        arr = plane.reshape(h, w * channels).view(">u2").reshape(h, w, channels)
        arr = arr.astype(np.float64) * (255.0 / 65535.0)
    return arr[:, :, 0] if channels == 1 else arr


# ---------------------------------------------------------------------------
# PGM / PPM (binary P5 / P6)
# ---------------------------------------------------------------------------


def _read_pnm_header(blob: bytes, path: Path):
    tokens = []
    pos = 2  # past magic
    while len(tokens) < 3:
        if pos >= len(blob):
            raise ImageDecodeError(f"{path}: truncated PNM header")
        ch = blob[pos:pos + 1]
        if ch == b"#":
            while pos < len(blob) and blob[pos:pos + 1] not in (b"\n", b"\r"):
                pos += 1
        elif ch.isspace():
            pos += 1
        else:
            start = pos
            while pos < len(blob) and not blob[pos:pos + 1].isspace():
                pos += 1
            tokens.append(blob[start:pos])
    pos += 1  # single whitespace after maxval
    try:
        w, h, maxval = (int(t) for t in tokens)
    except ValueError as exc:
        raise ImageDecodeError(f"{path}: malformed PNM header") from exc
    if w < 1 or h < 1 or maxval < 1 or maxval > 65535:
        raise ImageDecodeError(f"{path}: invalid PNM dimensions/maxval")
    return w, h, maxval, pos


def _read_pnm(path: Path) -> np.ndarray:
    blob = path.read_bytes()
    magic = blob[:2]
    if magic not in (b"P5", b"P6"):
        raise ImageFormatError(f"{path}: not a binary PGM/PPM file")
    channels = 1 if magic == b"P5" else 3
    w, h, maxval, pos = _read_pnm_header(blob, path)
    wide = maxval > 255
    count = w * h * channels
    dtype = ">u2" if wide else np.uint8
    expect = count * (2 if wide else 1)
    body = blob[pos:pos + expect]
    if len(body) != expect:
        raise ImageDecodeError(f"{path}: truncated PNM pixel data")
    arr = np.frombuffer(body, dtype=dtype).astype(np.float64)
    if wide:
        arr *= 255.0 / maxval
    arr = arr.reshape(h, w) if channels == 1 else arr.reshape(h, w, 3)
    return arr


def _write_pnm(path: Path, arr: np.ndarray) -> None:
    data = np.clip(np.rint(arr), 0, 255).astype(np.uint8)
    if data.ndim == 2:
        magic, (h, w) = b"P5", data.shape
    else:
        magic, (h, w) = b"P6", data.shape[:2]
    with open(path, "wb") as fh:
        fh.write(magic + b"\n%d %d\n255\n" % (w, h))
        fh.write(data.tobytes())


# ---------------------------------------------------------------------------
# Public I/O
# ---------------------------------------------------------------------------


def load_image(path) -> np.ndarray:
    """Load a PNG or binary PGM/PPM file as an (H, W, 3) float64 raster.

    Grayscale sources are promoted to three equal channels.  16-bit inputs
    are rescaled to [0, 255].  Raises FileNotFoundError for missing files,
    ImageFormatError for unsupported formats, ImageDecodeError for corrupt
    streams.
    """
    p = Path(path)
    if not p.is_file():
        raise FileNotFoundError(f"no such image file: {p}")
    head = p.open("rb").read(8)
    if head.startswith(_PNG_SIGNATURE):
        arr = _read_png(p)
    elif head[:2] in (b"P5", b"P6"):
        arr = _read_pnm(p)
    else:
        raise ImageFormatError(f"{p}: unsupported image format")
    if arr.ndim == 2:
        arr = np.repeat(arr[:, :, None], 3, axis=2)
    return arr


def load_luma(path) -> np.ndarray:
    """Load an image file and reduce it to the Rec.601 luma raster."""
    return to_luma(load_image(path))


def save_image(path, img) -> None:
    """Save a gray or RGB raster as PNG or PGM/PPM, chosen by file suffix.

    Values are rounded and clipped to 8-bit; PGM/PPM are written with
    maxval 255.
    """
    p = Path(path)
    arr = np.asarray(img, dtype=np.float64)
    if arr.ndim not in (2, 3):
        raise ValueError(f"cannot save raster of shape {arr.shape}")
    suffix = p.suffix.lower()
    if suffix == ".png":
        _write_png(p, arr)
    elif suffix in (".pgm", ".ppm"):
        if suffix == ".pgm" and arr.ndim == 3:
            raise ValueError("PGM stores a single channel; use .ppm for RGB")
        if suffix == ".ppm" and arr.ndim == 2:
            raise ValueError("PPM stores RGB; use .pgm for grayscale")
        _write_pnm(p, arr)
    else:
        raise ImageFormatError(f"unsupported output format: {suffix or '(none)'}")
