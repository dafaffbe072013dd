"""Dense float32 tensor primitives: deterministic RNG streams, bicubic
resampling, and affine warping.

Tensors are plain ``numpy.ndarray`` objects (float32 by convention, row-major).
All operations return new arrays; nothing here mutates its inputs, so results
may be shared freely across workers.

Randomness is counter-based: a stream is addressed by ``(seed, stream_id,
counter)`` and produces the same values on any host and under any call
interleaving with other streams. Normals are generated by Box-Muller over raw
Philox words so that every draw consumes a fixed, known number of counter
positions.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

_MASK64 = (1 << 64) - 1


def _splitmix64(x: int) -> int:
    x = (x + 0x9E3779B97F4A7C15) & _MASK64
    x = ((x ^ (x >> 30)) * 0xBF58476D1CE4E5B9) & _MASK64
    x = ((x ^ (x >> 27)) * 0x94D049BB133111EB) & _MASK64
    return x ^ (x >> 31)


@dataclass
class RngStream:
    """Counter-based random stream keyed by (seed, stream_id).

    ``counter`` is the number of 64-bit words consumed so far. Streams are
    value-semantic: copy the dataclass to replay, or derive independent
    substreams with :meth:`child`.
    """

    seed: int
    stream_id: int = 0
    counter: int = 0

    def _raw(self, n_words: int) -> np.ndarray:
        # Philox-4x64: counter blocks hold 4 words each, so jump to the
        # enclosing block and discard the in-block remainder.
        block, rem = divmod(self.counter, 4)
        bg = np.random.Philox(
            key=np.array([self.seed & _MASK64, self.stream_id & _MASK64], dtype=np.uint64),
            counter=np.array([block, 0, 0, 0], dtype=np.uint64),
        )
        words = bg.random_raw(rem + n_words)
        self.counter += n_words
        return words[rem:]

    def uniform(self, shape, low: float = 0.0, high: float = 1.0, dtype=np.float32) -> np.ndarray:
        """I.i.d. uniforms on [low, high); one counter word per value."""
        shape = _checked_shape(shape)
        n = int(np.prod(shape))
        u = (self._raw(n) >> np.uint64(11)).astype(np.float64) * 2.0**-53
        return (low + (high - low) * u).reshape(shape).astype(dtype)

    def normal(self, shape, dtype=np.float32) -> np.ndarray:
        """I.i.d. standard normals; value i always maps to counter words
        (2i, 2i+1), so draws can be split at any boundary."""
        shape = _checked_shape(shape)
        n = int(np.prod(shape))
        w = self._raw(2 * n)
        # map words to (0,1] so log() is safe
        u1 = 1.0 - (w[0::2] >> np.uint64(11)).astype(np.float64) * 2.0**-53
        u2 = (w[1::2] >> np.uint64(11)).astype(np.float64) * 2.0**-53
        z = np.sqrt(-2.0 * np.log(u1)) * np.cos(2.0 * np.pi * u2)
        return z.reshape(shape).astype(dtype)

    def integers(self, n_values: int, high: int) -> np.ndarray:
        """Uniform ints in [0, high); one counter word per value (Lemire-free,
        negligible modulo bias for high << 2**64)."""
        if high <= 0:
            raise ValueError("high must be positive")
        return (self._raw(n_values) % np.uint64(high)).astype(np.int64)

    def child(self, index: int) -> "RngStream":
        """Derive an independent substream; deterministic in (stream_id, index)."""
        mixed = _splitmix64((self.stream_id ^ _splitmix64(index + 1)) & _MASK64)
        return RngStream(seed=self.seed, stream_id=mixed, counter=0)

    def clone(self) -> "RngStream":
        return RngStream(self.seed, self.stream_id, self.counter)


def _checked_shape(shape) -> tuple:
    if np.isscalar(shape):
        shape = (int(shape),)
    shape = tuple(int(d) for d in shape)
    if len(shape) == 0:
        raise ValueError("shape must be nonempty")
    if any(d <= 0 for d in shape):
        raise ValueError(f"zero-sized dimension in shape {shape}")
    return shape


def gaussian_noise(rng: RngStream, dims) -> np.ndarray:
    """Draw an i.i.d. N(0, 1) tensor of the given shape from the stream."""
    return rng.normal(dims)


# ---------------------------------------------------------------------------
# resampling
# ---------------------------------------------------------------------------

def _catmull_rom(t: np.ndarray) -> np.ndarray:
    # cubic convolution kernel with a = -0.5
    a = -0.5
    t = np.abs(t)
    out = np.zeros_like(t)
    m1 = t <= 1.0
    m2 = (t > 1.0) & (t < 2.0)
    out[m1] = (a + 2.0) * t[m1] ** 3 - (a + 3.0) * t[m1] ** 2 + 1.0
    out[m2] = a * t[m2] ** 3 - 5.0 * a * t[m2] ** 2 + 8.0 * a * t[m2] - 4.0 * a
    return out


def _axis_weights(n_in: int, n_out: int):
    src = (np.arange(n_out, dtype=np.float64) + 0.5) * (n_in / n_out) - 0.5
    base = np.floor(src).astype(np.int64)
    frac = src - base
    idx = np.stack([np.clip(base + j, 0, n_in - 1) for j in range(-1, 3)])  # [4, n_out]
    wts = np.stack([_catmull_rom(frac - j) for j in range(-1, 3)])  # [4, n_out]
    return idx, wts


def resize_bicubic(img: np.ndarray, scale: float) -> np.ndarray:
    """Rescale [C,H,W] (or [H,W]) by Catmull-Rom bicubic interpolation.

    Output dims are round(H*scale) x round(W*scale). Sampling is
    pixel-center aligned and edge-clamped; scale == 1 is an exact identity.
    """
    if scale <= 0:
        raise ValueError(f"scale must be positive, got {scale}")
    squeeze = img.ndim == 2
    if squeeze:
        img = img[None]
    if img.ndim != 3:
        raise ValueError(f"expected [C,H,W] image, got shape {img.shape}")
    c, h, w = img.shape
    if h < 4 or w < 4:
        raise ValueError(f"image too small for bicubic resampling: {h}x{w}")
    h_out = int(round(h * scale))
    w_out = int(round(w * scale))
    if h_out < 1 or w_out < 1:
        raise ValueError(f"scale {scale} collapses {h}x{w} to an empty image")

    x = img.astype(np.float64)
    iy, wy = _axis_weights(h, h_out)
    ix, wx = _axis_weights(w, w_out)
    # rows then columns; separable kernel
    rows = sum(x[:, iy[j], :] * wy[j][None, :, None] for j in range(4))
    out = sum(rows[:, :, ix[j]] * wx[j][None, None, :] for j in range(4))
    out = out.astype(img.dtype)
    return out[0] if squeeze else out


def warp_affine(img: np.ndarray, dx: float, dy: float, theta: float) -> np.ndarray:
    """Translate image content by (dx, dy) pixels and rotate by theta degrees
    about the image center.

    Resampling is bilinear on the inverse-mapped grid; out-of-bounds source
    samples are edge-clamped. dx moves content along x (columns), dy along y
    (rows).
    """
    if abs(theta) >= 90.0:
        raise ValueError(f"|theta| must be < 90 degrees, got {theta}")
    squeeze = img.ndim == 2
    if squeeze:
        img = img[None]
    if img.ndim != 3:
        raise ValueError(f"expected [C,H,W] image, got shape {img.shape}")
    c, h, w = img.shape

    ang = np.deg2rad(theta)
    cos_t, sin_t = np.cos(ang), np.sin(ang)
    cy, cx = (h - 1) / 2.0, (w - 1) / 2.0

    ys, xs = np.meshgrid(np.arange(h, dtype=np.float64), np.arange(w, dtype=np.float64), indexing="ij")
    # inverse map: undo translation, then rotate by -theta about the center
    yr = ys - cy - dy
    xr = xs - cx - dx
    src_y = cos_t * yr + sin_t * xr + cy
    src_x = -sin_t * yr + cos_t * xr + cx

    y0 = np.floor(src_y).astype(np.int64)
    x0 = np.floor(src_x).astype(np.int64)
    fy = src_y - y0
    fx = src_x - x0
    y0c = np.clip(y0, 0, h - 1)
    y1c = np.clip(y0 + 1, 0, h - 1)
    x0c = np.clip(x0, 0, w - 1)
    x1c = np.clip(x0 + 1, 0, w - 1)

    x64 = img.astype(np.float64)
    out = (
        x64[:, y0c, x0c] * ((1 - fy) * (1 - fx))[None]
        + x64[:, y0c, x1c] * ((1 - fy) * fx)[None]
        + x64[:, y1c, x0c] * (fy * (1 - fx))[None]
        + x64[:, y1c, x1c] * (fy * fx)[None]
    )
    out = out.astype(img.dtype)
    return out[0] if squeeze else out
