import json
import math

import numpy as np
import pytest

from tapemend.degradation import (
    DegradationConfig, DropoutConfig, FringeConfig, MistrackingConfig, NoiseConfig,
    add_gaussian_noise, degrade_clip,
)
from tapemend.errors import ShapeError
from tapemend.losses import fixture_extractor
from tapemend.metrics import (
    lpips, metric_report, psnr, psnr_per_frame, ssim, to_luma,
)
from tapemend.video_io import Clip, Frame
from conftest import make_compute_clip, structured_frames


from oracles import brute_force_ssim, reference_lpips


# --- PSNR -------------------------------------------------------------------

class TestPsnr:
    def test_identical_is_infinite(self):
        clip = make_compute_clip(seed=1)
        assert psnr(clip, clip) == math.inf

    def test_zero_vs_one_is_zero_db(self):
        a = Frame(np.zeros((8, 8, 3), dtype=np.float32))
        b = Frame(np.ones((8, 8, 3), dtype=np.float32))
        assert psnr(a, b) == pytest.approx(0.0, abs=1e-12)

    def test_closed_form_half_gray(self):
        a = Frame(np.zeros((8, 8, 3), dtype=np.float32))
        b = Frame(np.full((8, 8, 3), 128 / 255, dtype=np.float32))
        expected = 10 * math.log10(1.0 / (128 / 255) ** 2)
        assert psnr(a, b) == pytest.approx(expected, abs=1e-3)
        assert expected == pytest.approx(5.987, abs=1e-3)

    def test_symmetry(self):
        a = make_compute_clip(seed=1)
        b = make_compute_clip(seed=2)
        assert psnr(a, b) == psnr(b, a)

    def test_shape_mismatch(self):
        with pytest.raises(ShapeError):
            psnr(make_compute_clip(h=16, w=16), make_compute_clip(h=16, w=8))

    def test_monotone_in_noise_sigma(self):
        frame = Frame(structured_frames(1, 64, 64)[0])
        values = []
        for sigma in (0.01, 0.05, 0.1):
            noisy = add_gaussian_noise(frame, sigma, np.random.default_rng(33))
            values.append(psnr(frame, noisy))
        assert values[0] > values[1] > values[2]

    def test_mixed_frames_exclude_inf(self):
        clean = structured_frames(3, 16, 16)
        noisy = clean.copy()
        noisy[1] = np.clip(noisy[1] + 0.1, 0, 1)
        per_frame = psnr_per_frame(Clip(clean), Clip(noisy))
        assert per_frame[0] == math.inf and per_frame[2] == math.inf
        assert psnr(Clip(clean), Clip(noisy)) == pytest.approx(per_frame[1])


# --- SSIM -------------------------------------------------------------------

class TestSsim:
    def test_identical_is_one(self):
        clip = make_compute_clip(h=16, w=16, seed=3)
        assert ssim(clip, clip) == pytest.approx(1.0, abs=1e-12)

    def test_zero_variance_closed_form(self):
        a = Frame(np.zeros((16, 16, 3), dtype=np.float32))
        b = Frame(np.ones((16, 16, 3), dtype=np.float32))
        c1 = 0.01 ** 2
        assert ssim(a, b) == pytest.approx(c1 / (1 + c1), abs=1e-7)
        assert c1 / (1 + c1) == pytest.approx(9.999e-5, abs=1e-7)

    def test_matches_brute_force_on_random_pairs(self):
        rng = np.random.default_rng(17)
        for trial in range(3):
            a = rng.random((16, 16, 3))
            b = np.clip(a + rng.normal(0, 0.2, a.shape), 0, 1)
            fast = ssim(Frame(a.astype(np.float32)), Frame(b.astype(np.float32)))
            slow = brute_force_ssim(to_luma(a[None])[0], to_luma(b[None])[0])
            assert fast == pytest.approx(slow, abs=1e-6)

    def test_rgb_mode_matches_brute_force(self):
        rng = np.random.default_rng(23)
        a = rng.random((16, 16, 3))
        b = rng.random((16, 16, 3))
        fast = ssim(Frame(a.astype(np.float32)), Frame(b.astype(np.float32)),
                    channel_mode="rgb")
        slow = np.mean([brute_force_ssim(a[..., c], b[..., c]) for c in range(3)])
        assert fast == pytest.approx(slow, abs=1e-6)

    def test_symmetry(self):
        a = make_compute_clip(h=16, w=16, seed=4)
        b = make_compute_clip(h=16, w=16, seed=5)
        assert ssim(a, b) == pytest.approx(ssim(b, a), abs=1e-12)

    def test_too_small_frame(self):
        with pytest.raises(ShapeError):
            ssim(make_compute_clip(h=8, w=8), make_compute_clip(h=8, w=8))


# --- LPIPS ------------------------------------------------------------------

class TestLpips:
    def test_identical_is_zero(self):
        clip = make_compute_clip(h=8, w=8, seed=6)
        assert lpips(clip, clip, fixture_extractor()) == pytest.approx(0.0, abs=1e-12)

    def test_symmetry(self):
        a = make_compute_clip(h=8, w=8, seed=7)
        b = make_compute_clip(h=8, w=8, seed=8)
        extractor = fixture_extractor()
        assert lpips(a, b, extractor) == pytest.approx(lpips(b, a, extractor), abs=1e-12)

    def test_matches_direct_convolution_reference(self):
        rng = np.random.default_rng(41)
        a = rng.random((8, 8, 3))
        b = rng.random((8, 8, 3))
        fast = lpips(Frame(a.astype(np.float32)), Frame(b.astype(np.float32)),
                     fixture_extractor())
        slow = reference_lpips(a.transpose(2, 0, 1), b.transpose(2, 0, 1))
        assert fast == pytest.approx(slow, abs=1e-6)

    def test_calibration_weights(self):
        rng = np.random.default_rng(43)
        a = Frame(rng.random((8, 8, 3)).astype(np.float32))
        b = Frame(rng.random((8, 8, 3)).astype(np.float32))
        extractor = fixture_extractor()
        unit = lpips(a, b, extractor)
        doubled = lpips(a, b, extractor,
                        calibration=[np.full(4, 2.0), np.full(8, 2.0)])
        assert doubled == pytest.approx(2 * unit, rel=1e-9)

    def test_degradation_reduces_quality(self):
        clean = Clip(structured_frames(3, 64, 64))
        config = DegradationConfig(
            seed=11, noise=NoiseConfig(prob=1.0, sigma_range=(0.05, 0.1)),
            dropout=DropoutConfig(prob=1.0), fringe=FringeConfig(prob=1.0),
            mistracking=MistrackingConfig(prob=1.0))
        degraded, _ = degrade_clip(clean, config)
        assert psnr(degraded, clean) < math.inf
        assert ssim(degraded, clean) < 1.0
        assert lpips(degraded, clean, fixture_extractor()) > 0.0


# --- Report -----------------------------------------------------------------

class TestReport:
    def test_report_means_and_serialization(self):
        a = Clip(structured_frames(4, 16, 16))
        b = Clip(np.clip(a.data + 0.05, 0, 1))
        report = metric_report(a, b, extractor=fixture_extractor())
        assert report.psnr_db == pytest.approx(np.mean(report.per_frame["psnr_db"]))
        assert report.ssim == pytest.approx(np.mean(report.per_frame["ssim"]))
        assert report.lpips == pytest.approx(np.mean(report.per_frame["lpips"]))
        doc = json.loads(report.to_json_str())
        assert isinstance(doc["psnr_db"], float)

    def test_inf_serialized_as_string(self):
        a = make_compute_clip(seed=9)
        report = metric_report(a, a)
        doc = json.loads(report.to_json_str())
        assert doc["psnr_db"] == "inf"
        assert doc["ssim"] == pytest.approx(1.0)
