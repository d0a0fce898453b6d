import math

import numpy as np
import pytest

from corrsr import synthetic
from corrsr.interp import warp_rotate_scale
from corrsr.registration import (fourier_shift, logpolar_prealign, matrix_dft_patch,
                                 phase_correlate, register_candidates,
                                 register_to_query)


class TestPhaseCorrelate:
    def test_self_registration(self, scene_256):
        r = phase_correlate(scene_256, scene_256, kappa=1)
        assert (r.dy, r.dx) == (0.0, 0.0)
        assert r.error < 1e-6
        assert r.reliable

    def test_integer_circular_shift_exact(self, scene_256):
        moving = np.roll(scene_256, (3, 5), axis=(0, 1))
        r = phase_correlate(scene_256, moving, kappa=1)
        assert (r.dy, r.dx) == (3.0, 5.0)

    def test_negative_shift_wraparound(self, scene_256):
        moving = np.roll(scene_256, (-7, 100), axis=(0, 1))
        r = phase_correlate(scene_256, moving, kappa=1)
        assert (r.dy, r.dx) == (-7.0, 100.0)

    def test_subpixel_shift(self, scene_256):
        moving = fourier_shift(scene_256, -1.27, 3.48)
        r = phase_correlate(scene_256, moving, kappa=20)
        assert r.dy == pytest.approx(-1.27, abs=0.05)
        assert r.dx == pytest.approx(3.48, abs=0.05)

    def test_antisymmetry(self, scene_256):
        moving = fourier_shift(scene_256, 2.3, -4.1)
        fwd = phase_correlate(scene_256, moving, kappa=20)
        rev = phase_correlate(moving, scene_256, kappa=20)
        assert fwd.dy == pytest.approx(-rev.dy, abs=2 / 20)
        assert fwd.dx == pytest.approx(-rev.dx, abs=2 / 20)

    def test_error_decreases_with_less_noise(self, scene_256, rng):
        shifted = fourier_shift(scene_256, 1.5, -2.5)
        noisy_hi = shifted + rng.normal(0, 25, shifted.shape)
        noisy_lo = shifted + rng.normal(0, 5, shifted.shape)
        err_hi = phase_correlate(scene_256, noisy_hi, kappa=4).error
        err_lo = phase_correlate(scene_256, noisy_lo, kappa=4).error
        assert err_lo < err_hi

    def test_zero_shift_error_reported(self, scene_256):
        moving = np.roll(scene_256, (4, 4), axis=(0, 1))
        r = phase_correlate(scene_256, moving, kappa=1)
        assert r.error < r.zero_shift_error <= 1.0

    def test_impulse_noise_robustness(self, rng):
        img = synthetic.textured_scene(9, (128, 128))
        moving = np.roll(img, (6, -9), axis=(0, 1))
        n = int(0.10 * moving.size)
        ys = rng.integers(0, 128, n)
        xs = rng.integers(0, 128, n)
        moving = moving.copy()
        moving[ys, xs] = rng.uniform(0, 255, n)
        r = phase_correlate(img, moving, kappa=1)
        assert (r.dy, r.dx) == (6.0, -9.0)

    def test_degenerate_input_flagged(self):
        flat = np.full((32, 32), 7.0)
        textured = synthetic.textured_scene(2, (32, 32))
        r = phase_correlate(textured, flat, kappa=4)
        assert not r.reliable
        assert (r.dy, r.dx) == (0.0, 0.0)

    def test_dimension_mismatch(self):
        with pytest.raises(ValueError):
            phase_correlate(np.zeros((32, 32)), np.zeros((32, 16)))

    def test_too_small(self):
        with pytest.raises(ValueError):
            phase_correlate(np.zeros((8, 8)), np.zeros((8, 8)))


class TestMatrixDftPatch:
    def test_full_domain_equals_inverse_fft(self, rng):
        for shape in ((32, 32), (16, 24)):
            spec = np.fft.fft2(rng.uniform(0, 1, shape))
            patch = matrix_dft_patch(spec, (0.0, 0.0), shape, 1)
            expect = np.fft.fftshift(np.fft.ifft2(spec))
            assert np.allclose(patch, expect, atol=1e-9 * np.abs(expect).max())

    def test_delta_spectrum_flat_magnitude(self):
        spec = np.zeros((16, 16), dtype=complex)
        spec[0, 0] = 1.0
        patch = matrix_dft_patch(spec, (3.2, -1.7), 2.0, 5)
        assert np.allclose(np.abs(patch), 1.0 / 256, atol=1e-12)

    def test_real_signal_symmetric_spectrum(self, rng):
        spec = np.fft.fft2(rng.uniform(0, 1, (32, 32)))
        patch = matrix_dft_patch(spec, (1.0, 1.0), 3.0, 4)
        assert np.abs(patch.imag).max() <= 1e-9 * np.abs(patch).max()

    @pytest.mark.parametrize("kappa", [2, 4, 10])
    def test_agrees_with_zero_padded_fft_oracle(self, rng, kappa):
        # upsampled correlation by giant zero-padded inverse FFT; the
        # embedding splits the unpaired Nyquist row/column across +/-N/2,
        # the canonical treatment for real signals
        m = 32
        src = rng.uniform(0, 1, (m, m))
        spec = np.fft.fft2(src)
        shifted = np.fft.fftshift(spec)
        n = m * kappa
        lo = (n - m) // 2
        padded = np.zeros((n + 1, n + 1), dtype=complex)
        padded[lo:lo + m, lo:lo + m] = shifted
        padded[lo + m, lo:lo + m] = padded[lo, lo:lo + m] / 2.0
        padded[lo, lo:lo + m] /= 2.0
        padded[lo:lo + m + 1, lo + m] = padded[lo:lo + m + 1, lo] / 2.0
        padded[lo:lo + m + 1, lo] /= 2.0
        padded = padded[:n, :n]
        big = np.fft.ifft2(np.fft.ifftshift(padded)) * kappa * kappa
        patch = matrix_dft_patch(spec, (0.0, 0.0), (float(m), float(m)), kappa)
        expect = np.fft.fftshift(big)
        assert np.allclose(patch, expect, atol=1e-6 * np.abs(expect).max())


class TestLogpolarPrealign:
    def test_identity(self, scene_256):
        pre = logpolar_prealign(scene_256, scene_256)
        assert pre.rotation == 0.0
        assert pre.scale == 1.0
        assert pre.reliable

    def test_pure_rotation(self, scene_256):
        moving = warp_rotate_scale(scene_256, math.radians(10), 1.0)
        pre = logpolar_prealign(scene_256, moving)
        assert math.degrees(pre.rotation) == pytest.approx(10.0, abs=0.5)
        assert pre.scale == pytest.approx(1.0, abs=0.01)

    def test_pure_scale(self, scene_256):
        moving = warp_rotate_scale(scene_256, 0.0, 1.2)
        pre = logpolar_prealign(scene_256, moving)
        assert pre.scale == pytest.approx(1.2, rel=0.015)
        assert math.degrees(abs(pre.rotation)) < 0.5

    def test_degenerate_flagged(self):
        flat = np.full((64, 64), 3.0)
        pre = logpolar_prealign(flat, flat)
        assert not pre.reliable
        assert (pre.rotation, pre.scale) == (0.0, 1.0)


class TestRegisterToQuery:
    def test_identity_candidate(self, scene_256):
        aligned, result = register_to_query(scene_256, scene_256, kappa=10)
        rms = np.sqrt(np.mean((aligned - scene_256) ** 2))
        assert rms < 1e-6
        assert result.rotation == 0.0 and result.scale == 1.0
        assert result.reliable

    def test_composite_rotation_and_shift(self, scene_256):
        moving = warp_rotate_scale(scene_256, math.radians(5), 1.0)
        moving = fourier_shift(moving, 2.5, -4.25)
        aligned, result = register_to_query(scene_256, moving, kappa=20)
        h, w = scene_256.shape
        crop = np.s_[h // 10:-h // 10, w // 10:-w // 10]
        rms = np.sqrt(np.mean((aligned[crop] - scene_256[crop]) ** 2))
        assert rms < 0.05 * np.ptp(scene_256)
        assert math.degrees(result.rotation) == pytest.approx(5.0, abs=0.5)

    def test_resizes_candidate(self, scene_256):
        small = scene_256[::2, ::2]
        aligned, result = register_to_query(scene_256, small, kappa=4)
        assert aligned.shape == scene_256.shape

    def test_multiple_candidates_independent(self, scene_256):
        candidates = [np.roll(scene_256, (k, -k), axis=(0, 1)) for k in (2, 5, 9)]
        results = register_candidates(scene_256, candidates, kappa=1)
        shifts = [(res.dy, res.dx) for _, res in results]
        assert shifts == [(2.0, -2.0), (5.0, -5.0), (9.0, -9.0)]
        # order independence
        rev = register_candidates(scene_256, candidates[::-1], kappa=1)
        assert [(r.dy, r.dx) for _, r in rev] == shifts[::-1]

    def test_unobserved_band_filled_from_reference(self, scene_256):
        moving = np.roll(scene_256, (20, 0), axis=(0, 1))
        aligned, result = register_to_query(scene_256, moving, kappa=1,
                                            use_logpolar=False)
        assert (result.dy, result.dx) == (20.0, 0.0)
        # rows wrapped by the circular shift must carry reference content
        assert np.array_equal(aligned[-20:, :], scene_256[-20:, :])
        assert np.allclose(aligned[:-20, :], scene_256[:-20, :], atol=1e-9)


class TestFourierShift:
    def test_integer_shift_matches_roll(self, scene_128):
        out = fourier_shift(scene_128, 3, -2)
        assert np.allclose(out, np.roll(scene_128, (3, -2), axis=(0, 1)), atol=1e-9)

    def test_shift_composition_on_bandlimited_input(self, scene_128):
        # fractional shifts only invert exactly when Nyquist energy is gone
        spec = np.fft.fft2(scene_128)
        fy = np.abs(np.fft.fftfreq(128))[:, None]
        fx = np.abs(np.fft.fftfreq(128))[None, :]
        spec[np.maximum(fy, fx) > 0.35] = 0.0
        smooth = np.real(np.fft.ifft2(spec))
        once = fourier_shift(fourier_shift(smooth, 1.3, -0.8), -1.3, 0.8)
        assert np.allclose(once, smooth, atol=1e-9)


class TestShiftEquivariance:
    @pytest.mark.parametrize("dy,dx", [(4.0, -6.0), (0.35, 0.85), (-7.45, 2.15)])
    def test_recovery_within_grid_pitch(self, scene_256, dy, dx):
        moving = fourier_shift(scene_256, dy, dx)
        r = phase_correlate(scene_256, moving, kappa=20)
        assert r.dy == pytest.approx(dy, abs=1 / 20)
        assert r.dx == pytest.approx(dx, abs=1 / 20)
