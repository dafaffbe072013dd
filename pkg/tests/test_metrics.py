import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from skimage.metrics import structural_similarity as skimage_ssim

from burstdiff.metrics import (MetricReport, psnr, ssim, w2_method,
                               wasserstein2_2d)
from burstdiff.tensorops import RngStream


def _psnr_ref(a, b, peak=1.0):
    """Scalar-loop reference implementation."""
    total = 0.0
    af, bf = a.ravel(), b.ravel()
    for x, y in zip(af, bf):
        total += (float(x) - float(y)) ** 2
    mse = total / len(af)
    return 10.0 * math.log10(peak * peak / mse)


class TestPsnr:
    def test_identical_returns_sentinel(self):
        a = RngStream(seed=1).normal((3, 8, 8))
        assert psnr(a, a.copy()) == math.inf

    def test_constant_half_difference(self):
        a = np.zeros((4, 4), dtype=np.float32)
        b = np.full((4, 4), 0.5, dtype=np.float32)
        assert abs(psnr(a, b) - 6.0206) < 1e-4

    def test_matches_scalar_oracle(self):
        rng = RngStream(seed=2)
        for _ in range(50):
            a = rng.uniform((6, 6))
            b = rng.uniform((6, 6))
            assert abs(psnr(a, b) - _psnr_ref(a, b)) < 1e-6

    def test_symmetry(self):
        a = RngStream(seed=3).uniform((8, 8))
        b = RngStream(seed=4).uniform((8, 8))
        assert psnr(a, b) == psnr(b, a)

    def test_strictly_decreasing_with_noise(self):
        a = RngStream(seed=5).uniform((16, 16))
        noise = RngStream(seed=6).normal((16, 16))
        values = [psnr(a, np.clip(a + s * noise, 0, 1)) for s in (0.01, 0.05, 0.1, 0.3)]
        assert all(x > y for x, y in zip(values, values[1:]))

    def test_shape_mismatch(self):
        with pytest.raises(ValueError):
            psnr(np.zeros((2, 2)), np.zeros((3, 3)))


class TestSsim:
    def test_identical_is_one(self):
        a = RngStream(seed=7).uniform((16, 16))
        assert abs(ssim(a, a.copy()) - 1.0) < 1e-12

    def test_matches_reference_implementation(self):
        rng = RngStream(seed=8)
        for _ in range(10):
            a = rng.uniform((20, 20), dtype=np.float64)
            b = rng.uniform((20, 20), dtype=np.float64)
            ref = skimage_ssim(a, b, gaussian_weights=True, sigma=1.5,
                               use_sample_covariance=False, data_range=1.0)
            assert abs(ssim(a, b) - ref) < 1e-4

    def test_multichannel_matches_reference(self):
        rng = RngStream(seed=9)
        a = rng.uniform((3, 16, 16), dtype=np.float64)
        b = rng.uniform((3, 16, 16), dtype=np.float64)
        ref = np.mean([
            skimage_ssim(a[c], b[c], gaussian_weights=True, sigma=1.5,
                         use_sample_covariance=False, data_range=1.0)
            for c in range(3)
        ])
        assert abs(ssim(a, b) - ref) < 1e-4

    def test_inverted_binary_texture_scores_low(self):
        rng = RngStream(seed=10)
        a = (rng.uniform((24, 24)) > 0.5).astype(np.float32)
        b = 1.0 - a
        assert ssim(a, b) < 0.1

    def test_symmetry(self):
        a = RngStream(seed=11).uniform((16, 16))
        b = RngStream(seed=12).uniform((16, 16))
        assert abs(ssim(a, b) - ssim(b, a)) < 1e-12

    def test_window_too_large(self):
        with pytest.raises(ValueError, match="window"):
            ssim(np.zeros((8, 8)), np.zeros((8, 8)))


class TestWasserstein2:
    def test_identical_sets_zero(self):
        pts = RngStream(seed=13).normal((64, 2), dtype=np.float64)
        assert wasserstein2_2d(pts, pts.copy()) == 0.0

    def test_point_masses_at_distance(self):
        a = np.tile([[0.0, 0.0]], (8, 1))
        b = np.tile([[3.0, 4.0]], (8, 1))
        assert abs(wasserstein2_2d(a, b) - 5.0) < 1e-12

    def test_shifted_gaussians(self):
        # closed form: W2(N(0,I), N(m,I)) = |m|
        rng = RngStream(seed=14)
        a = rng.normal((2048, 2), dtype=np.float64)
        b = rng.normal((2048, 2), dtype=np.float64)
        b[:, 0] += 2.0
        w2 = wasserstein2_2d(a, b)
        assert abs(w2 - 2.0) < 0.2

    def test_triangle_inequality(self):
        rng = RngStream(seed=15)
        a = rng.normal((256, 2), dtype=np.float64)
        b = rng.normal((256, 2), dtype=np.float64) + np.array([1.5, 0.0])
        c = rng.normal((256, 2), dtype=np.float64) + np.array([0.0, 1.5])
        ab = wasserstein2_2d(a, b)
        bc = wasserstein2_2d(b, c)
        ac = wasserstein2_2d(a, c)
        assert ac <= (ab + bc) * 1.1

    def test_empty_rejected(self):
        with pytest.raises(ValueError):
            wasserstein2_2d(np.zeros((0, 2)), np.zeros((0, 2)))

    def test_method_recording(self):
        assert w2_method(100) == "exact-assignment"
        assert w2_method(5000) == "sliced-64"

    def test_sliced_path_shifted_gaussians(self):
        rng = RngStream(seed=16)
        a = rng.normal((5000, 2), dtype=np.float64)
        b = rng.normal((5000, 2), dtype=np.float64)
        b[:, 0] += 2.0
        w2 = wasserstein2_2d(a, b)
        assert abs(w2 - 2.0) < 0.4


@settings(max_examples=25, deadline=None)
@given(seed=st.integers(min_value=0, max_value=10_000))
def test_psnr_nonnegative_on_unit_range(seed):
    rng = RngStream(seed=seed)
    a = rng.uniform((8, 8))
    b = rng.uniform((8, 8))
    value = psnr(a, b)
    assert value == math.inf or value >= 0.0


class TestMetricReport:
    def test_csv_layout(self):
        report = MetricReport()
        report.add("0000", 30.0, 0.9)
        report.add("0001", math.inf, 1.0)
        csv = report.to_csv()
        lines = csv.strip().split("\n")
        assert lines[0] == "image_id,psnr_db,ssim"
        assert lines[2].startswith("0001,identical,")
        assert lines[3].startswith("mean,30.000000,")
        assert lines[4].startswith("stddev,")

    def test_ssim_range_enforced(self):
        report = MetricReport()
        with pytest.raises(ValueError):
            report.add("0000", 30.0, 1.5)
