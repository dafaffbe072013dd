import numpy as np
import pytest

from burstdiff.tensorops import RngStream, gaussian_noise, resize_bicubic, warp_affine


# ---------------------------------------------------------------------------
# RNG streams
# ---------------------------------------------------------------------------

class TestRngStream:
    def test_replay_is_bit_identical(self):
        a = gaussian_noise(RngStream(seed=42, stream_id=3), (1,))
        b = gaussian_noise(RngStream(seed=42, stream_id=3), (1,))
        assert np.array_equal(a, b)

    def test_sequence_replay_long(self):
        a = gaussian_noise(RngStream(seed=7, stream_id=1), (257,))
        b = gaussian_noise(RngStream(seed=7, stream_id=1), (257,))
        assert np.array_equal(a, b)

    def test_distinct_streams_differ(self):
        a = gaussian_noise(RngStream(seed=5, stream_id=0), (16,))
        b = gaussian_noise(RngStream(seed=5, stream_id=1), (16,))
        assert not np.any(a == b)

    def test_counter_slicing_matches_one_shot(self):
        # consuming in two chunks must equal one contiguous draw
        rng = RngStream(seed=9, stream_id=2)
        first = rng.normal((10,))
        second = rng.normal((10,))
        whole = RngStream(seed=9, stream_id=2).normal((20,))
        np.testing.assert_array_equal(np.concatenate([first, second]), whole)

    def test_interleaving_with_other_streams_is_irrelevant(self):
        a1 = RngStream(seed=1, stream_id=10)
        b1 = RngStream(seed=1, stream_id=20)
        seq_a = [a1.normal((3,)) for _ in range(4)]

        a2 = RngStream(seed=1, stream_id=10)
        b2 = RngStream(seed=1, stream_id=20)
        inter_a = []
        for _ in range(4):
            inter_a.append(a2.normal((3,)))
            b2.normal((5,))
        np.testing.assert_array_equal(np.concatenate(seq_a), np.concatenate(inter_a))
        assert b1.counter == 0

    def test_moments_large_sample(self):
        # law of large numbers: 1e6 draws pin mean/var to within 0.01
        z = gaussian_noise(RngStream(seed=123), (1_000_000,))
        assert abs(float(np.mean(z, dtype=np.float64))) < 0.01
        assert abs(float(np.var(z.astype(np.float64))) - 1.0) < 0.01

    def test_uniform_range_and_moments(self):
        u = RngStream(seed=3).uniform((200_000,), -2.0, 6.0, dtype=np.float64)
        assert u.min() >= -2.0 and u.max() < 6.0
        assert abs(u.mean() - 2.0) < 0.02

    def test_child_streams_are_independent(self):
        parent = RngStream(seed=11, stream_id=4)
        c0 = parent.child(0)
        c1 = parent.child(1)
        assert c0.stream_id != c1.stream_id
        assert not np.any(c0.normal((8,)) == c1.normal((8,)))
        # deriving children does not consume the parent
        assert parent.counter == 0

    def test_child_is_deterministic(self):
        a = RngStream(seed=11, stream_id=4).child(5)
        b = RngStream(seed=11, stream_id=4).child(5)
        assert a.stream_id == b.stream_id

    def test_zero_dim_rejected(self):
        with pytest.raises(ValueError, match="zero-sized"):
            gaussian_noise(RngStream(seed=0), (3, 0))

    def test_empty_shape_rejected(self):
        with pytest.raises(ValueError):
            gaussian_noise(RngStream(seed=0), ())


# ---------------------------------------------------------------------------
# bicubic resize, checked against a standalone scalar-loop implementation
# ---------------------------------------------------------------------------

def _kernel_ref(t: float) -> float:
    a = -0.5
    t = abs(t)
    if t <= 1.0:
        return (a + 2) * t**3 - (a + 3) * t**2 + 1.0
    if t < 2.0:
        return a * t**3 - 5 * a * t**2 + 8 * a * t - 4 * a
    return 0.0


def _resize_ref(img: np.ndarray, scale: float) -> np.ndarray:
    """Plain-loop Catmull-Rom resize: pixel-center mapping, edge clamp."""
    c, h, w = img.shape
    h2, w2 = round(h * scale), round(w * scale)
    out = np.zeros((c, h2, w2))
    for ch in range(c):
        for i in range(h2):
            sy = (i + 0.5) * (h / h2) - 0.5
            y0 = int(np.floor(sy))
            for j in range(w2):
                sx = (j + 0.5) * (w / w2) - 0.5
                x0 = int(np.floor(sx))
                val = 0.0
                for dy in range(-1, 3):
                    wy = _kernel_ref(sy - (y0 + dy))
                    yy = min(max(y0 + dy, 0), h - 1)
                    for dx in range(-1, 3):
                        wx = _kernel_ref(sx - (x0 + dx))
                        xx = min(max(x0 + dx, 0), w - 1)
                        val += wy * wx * img[ch, yy, xx]
                out[ch, i, j] = val
    return out


class TestResizeBicubic:
    def test_constant_preserved(self):
        img = np.full((3, 8, 8), 0.3, dtype=np.float32)
        out = resize_bicubic(img, 2.0)
        assert out.shape == (3, 16, 16)
        np.testing.assert_allclose(out, 0.3, atol=1e-6)

    def test_scale_one_is_identity(self):
        img = RngStream(seed=1).normal((3, 8, 12))
        out = resize_bicubic(img, 1.0)
        assert np.array_equal(out, img)

    def test_matches_scalar_oracle_on_ramp(self):
        ramp = np.tile(np.arange(8, dtype=np.float32) / 7.0, (8, 1))[None]
        out = resize_bicubic(ramp, 2.0)
        ref = _resize_ref(ramp.astype(np.float64), 2.0)
        np.testing.assert_allclose(out, ref, atol=1e-5)

    @pytest.mark.parametrize("scale", [0.5, 1.5, 2.0, 3.0])
    def test_matches_scalar_oracle_random(self, scale):
        img = RngStream(seed=2).normal((2, 8, 8))
        out = resize_bicubic(img, scale)
        ref = _resize_ref(img.astype(np.float64), scale)
        np.testing.assert_allclose(out, ref, atol=1e-5)

    def test_round_trip_smooth_image(self):
        # band-limited: one slow sinusoid cycle across a 32-pixel tile
        ys, xs = np.meshgrid(np.arange(32), np.arange(32), indexing="ij")
        smooth = (0.5 + 0.4 * np.sin(2 * np.pi * xs / 32.0) * np.cos(2 * np.pi * ys / 32.0))
        smooth = smooth[None].astype(np.float32)
        down_up = resize_bicubic(resize_bicubic(smooth, 0.5), 2.0)
        rms = float(np.sqrt(np.mean((down_up - smooth) ** 2)))
        assert rms < 1e-2

    def test_bad_scale_rejected(self):
        with pytest.raises(ValueError, match="scale"):
            resize_bicubic(np.zeros((1, 8, 8), dtype=np.float32), 0.0)

    def test_too_small_rejected(self):
        with pytest.raises(ValueError):
            resize_bicubic(np.zeros((1, 3, 8), dtype=np.float32), 2.0)


# ---------------------------------------------------------------------------
# affine warp
# ---------------------------------------------------------------------------

class TestWarpAffine:
    def test_identity(self):
        img = RngStream(seed=4).normal((3, 12, 12))
        out = warp_affine(img, 0.0, 0.0, 0.0)
        np.testing.assert_allclose(out, img, atol=1e-6)

    def test_integer_shift_exact_interior(self):
        img = RngStream(seed=5).normal((1, 16, 16))
        out = warp_affine(img, 3.0, 0.0, 0.0)
        np.testing.assert_allclose(out[:, :, 4:], img[:, :, 1:-3], atol=1e-6)

    def test_integer_shift_both_axes(self):
        img = RngStream(seed=6).normal((1, 16, 16))
        out = warp_affine(img, 2.0, -3.0, 0.0)
        np.testing.assert_allclose(out[:, :12, 3:], img[:, 3:15, 1:14], atol=1e-6)

    def test_half_pixel_shift_on_ramp(self):
        # closed form: shifting a linear ramp r(x) = x by 0.5 gives x - 0.5
        w = 16
        ramp = np.tile(np.arange(w, dtype=np.float64), (w, 1))[None]
        out = warp_affine(ramp, 0.5, 0.0, 0.0)
        expected = ramp - 0.5
        np.testing.assert_allclose(out[:, :, 2:], expected[:, :, 2:], atol=1e-5)

    def test_shift_then_unshift_integer_interior(self):
        img = RngStream(seed=7).normal((1, 24, 24))
        back = warp_affine(warp_affine(img, 2.0, -3.0, 0.0), -2.0, 3.0, 0.0)
        m = 4
        np.testing.assert_allclose(back[:, m:-m, m:-m], img[:, m:-m, m:-m], atol=1e-4)

    def test_shift_then_unshift_fractional_interior(self):
        # bilinear resampling is exact on multilinear images, so the warp
        # pair must invert cleanly there even for fractional shifts
        ys, xs = np.meshgrid(np.arange(24, dtype=np.float64), np.arange(24, dtype=np.float64), indexing="ij")
        img = (0.2 + 0.01 * xs + 0.02 * ys + 0.001 * xs * ys)[None]
        back = warp_affine(warp_affine(img, 1.3, -0.7, 0.0), -1.3, 0.7, 0.0)
        m = 4
        np.testing.assert_allclose(back[:, m:-m, m:-m], img[:, m:-m, m:-m], atol=1e-4)

    def test_rotation_moves_off_center_pixels_only(self):
        img = np.zeros((1, 17, 17), dtype=np.float32)
        img[0, 8, 8] = 1.0  # exact center is a fixed point of the rotation
        out = warp_affine(img, 0.0, 0.0, 30.0)
        assert abs(out[0, 8, 8] - 1.0) < 1e-6

    def test_large_angle_rejected(self):
        with pytest.raises(ValueError, match="theta"):
            warp_affine(np.zeros((1, 8, 8), dtype=np.float32), 0.0, 0.0, 95.0)
