import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from corrsr import image
from corrsr.image import (ImageDecodeError, ImageFormatError, load_image, load_luma,
                          psnr, save_image, ssim, to_luma)
from helpers import oracle_psnr, oracle_ssim


class TestLuma:
    def test_white(self):
        img = np.full((2, 2, 3), 255.0)
        assert to_luma(img) == pytest.approx(np.full((2, 2), 255.0), abs=1e-9)

    def test_black(self):
        assert np.all(to_luma(np.zeros((2, 2, 3))) == 0.0)

    def test_mixed_pixel(self):
        # 0.299*100 + 0.587*50 + 0.114*200, evaluated independently
        expected = 0.299 * 100 + 0.587 * 50 + 0.114 * 200
        assert expected == pytest.approx(82.05)
        img = np.array([[[100.0, 50.0, 200.0]]])
        assert to_luma(img)[0, 0] == pytest.approx(expected, abs=1e-12)

    def test_ycbcr_round_trip(self, rng):
        rgb = rng.uniform(0, 255, (8, 8, 3))
        back = image.ycbcr_to_rgb(image.rgb_to_ycbcr(rgb))
        assert np.allclose(back, rgb, atol=1e-9)


class TestPsnr:
    def test_identical_is_infinite(self, rng):
        img = rng.uniform(0, 255, (16, 16))
        assert psnr(img, img) == math.inf

    def test_maximal_error_is_zero_db(self):
        assert psnr(np.zeros((8, 8)), np.full((8, 8), 255.0)) == pytest.approx(0.0)

    def test_matches_direct_summation_oracle(self, rng):
        ref = rng.uniform(0, 255, (8, 8))
        tst = rng.uniform(0, 255, (8, 8))
        assert psnr(ref, tst) == pytest.approx(oracle_psnr(ref, tst), abs=1e-9)

    def test_dimension_mismatch(self):
        with pytest.raises(ValueError):
            psnr(np.zeros((4, 4)), np.zeros((4, 5)))

    @given(st.integers(0, 2 ** 32 - 1))
    @settings(max_examples=20, deadline=None)
    def test_symmetry(self, seed):
        r = np.random.default_rng(seed)
        a = r.uniform(0, 255, (12, 12))
        b = r.uniform(0, 255, (12, 12))
        assert psnr(a, b) == pytest.approx(psnr(b, a), abs=1e-12)

    def test_monotone_in_perturbation(self, rng):
        a = rng.uniform(10, 240, (16, 16))
        assert psnr(a, a + 1.0) > psnr(a, a + 2.5)


class TestSsim:
    def test_self_similarity_is_exactly_one(self, rng):
        img = rng.uniform(0, 255, (32, 32))
        assert ssim(img, img) == 1.0

    def test_negative_image_below_one(self, rng):
        img = rng.uniform(0, 255, (32, 32))
        assert ssim(img, 255.0 - img) < 1.0

    def test_matches_windowed_oracle(self, rng):
        ref = rng.uniform(0, 255, (64, 64))
        tst = np.clip(ref + rng.normal(0, 12, ref.shape), 0, 255)
        assert ssim(ref, tst) == pytest.approx(oracle_ssim(ref, tst), abs=1e-6)

    def test_symmetry(self, rng):
        a = rng.uniform(0, 255, (24, 24))
        b = rng.uniform(0, 255, (24, 24))
        assert ssim(a, b) == pytest.approx(ssim(b, a), abs=1e-12)

    def test_too_small_rejected(self):
        with pytest.raises(ValueError):
            ssim(np.zeros((8, 8)), np.zeros((8, 8)))


class TestFileIO:
    def test_pgm_promotes_to_rgb(self, tmp_path):
        path = tmp_path / "g.pgm"
        path.write_bytes(b"P5\n2 2\n255\n" + bytes([0, 255, 128, 64]))
        rgb = load_image(path)
        assert rgb.shape == (2, 2, 3)
        assert np.all(rgb[:, :, 0] == rgb[:, :, 1]) and np.all(rgb[:, :, 1] == rgb[:, :, 2])
        assert rgb[0, 1, 0] == 255 and rgb[1, 1, 2] == 64

    def test_single_pixel_png_round_trip(self, tmp_path):
        path = tmp_path / "p.png"
        save_image(path, np.array([[[10.0, 20.0, 30.0]]]))
        rgb = load_image(path)
        assert rgb.shape == (1, 1, 3)
        assert tuple(rgb[0, 0]) == (10.0, 20.0, 30.0)

    @pytest.mark.parametrize("suffix", [".png", ".pgm"])
    def test_gray_round_trip_lossless(self, tmp_path, rng, suffix):
        img = rng.integers(0, 256, (13, 9)).astype(float)
        path = tmp_path / f"img{suffix}"
        save_image(path, img)
        back = load_image(path)
        assert np.array_equal(back[:, :, 0], img)
        assert np.array_equal(back[:, :, 1], img)

    @pytest.mark.parametrize("suffix", [".png", ".ppm"])
    def test_rgb_round_trip_lossless(self, tmp_path, rng, suffix):
        img = rng.integers(0, 256, (7, 11, 3)).astype(float)
        path = tmp_path / f"img{suffix}"
        save_image(path, img)
        assert np.array_equal(load_image(path), img)

    def test_sixteen_bit_pgm_rescaled(self, tmp_path):
        path = tmp_path / "wide.pgm"
        body = np.array([0, 65535, 32768, 100], dtype=">u2").tobytes()
        path.write_bytes(b"P5\n2 2\n65535\n" + body)
        luma = load_luma(path)
        assert luma[0, 0] == 0.0
        assert luma[0, 1] == pytest.approx(255.0)
        assert luma[1, 0] == pytest.approx(32768 * 255.0 / 65535)

    def test_missing_file(self, tmp_path):
        with pytest.raises(FileNotFoundError):
            load_image(tmp_path / "nope.png")

    def test_unsupported_format(self, tmp_path):
        path = tmp_path / "x.png"
        path.write_bytes(b"\xff\xd8\xff\xe0 not a png")
        with pytest.raises(ImageFormatError):
            load_image(path)

    def test_corrupt_png_stream(self, tmp_path):
        good = tmp_path / "ok.png"
        save_image(good, np.zeros((4, 4)))
        blob = bytearray(good.read_bytes())
        # damage the IDAT payload
        idat = blob.find(b"IDAT")
        blob[idat + 8] ^= 0xFF
        bad = tmp_path / "bad.png"
        bad.write_bytes(bytes(blob))
        with pytest.raises(ImageDecodeError):
            load_image(bad)

    def test_truncated_pnm(self, tmp_path):
        path = tmp_path / "t.pgm"
        path.write_bytes(b"P5\n4 4\n255\n" + bytes(7))
        with pytest.raises(ImageDecodeError):
            load_image(path)
