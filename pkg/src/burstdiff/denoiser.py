"""Denoiser realizations behind the common ``evaluate(x, sigma, cond)`` interface.

The trainable models predict a residual through the usual variance-exploding
preconditioning: D(x; sigma) = c_skip(sigma) * x + c_out(sigma) * F(...), with

    c_skip = sd^2 / (sigma^2 + sd^2)
    c_out  = sigma * sd / sqrt(sigma^2 + sd^2)
    c_in   = 1 / sqrt(sigma^2 + sd^2)
    c_noise = log(sigma) / 4

so the identity at zero noise (c_skip(0) = 1, c_out(0) = 0) holds by
construction — which is also the fixed-point boundary condition consistency
training relies on.

Burst conditioning: aligned frames are fused into a confidence-weighted mean
plus a per-pixel spread channel group, rescaled to the decoder scales, and
injected through spatially-varying affine modulation (gamma * f + beta) whose
coefficients come from trainable 1x1 convolutions.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.ndimage import convolve as nd_convolve

from .baseline import AlignmentEstimate
from .burstgen import BurstStack
from .nn import AvgPool2, Conv2d, Dense, Param, SiLU, Upsample2
from .tensorops import RngStream, resize_bicubic, warp_affine


def sft_modulate(feat: np.ndarray, gamma: np.ndarray, beta: np.ndarray) -> np.ndarray:
    """Spatial feature modulation: elementwise gamma * feat + beta."""
    if feat.shape != gamma.shape or feat.shape != beta.shape:
        raise ValueError(f"shape mismatch: feat {feat.shape}, gamma {gamma.shape}, beta {beta.shape}")
    return gamma * feat + beta


def edm_precondition(x: np.ndarray, sigma: float, raw_net_output: np.ndarray, sigma_data: float) -> np.ndarray:
    """Combine skip path and raw network output: c_skip * x + c_out * raw."""
    if np.any(np.asarray(sigma) < 0):
        raise ValueError("sigma must be >= 0")
    sd2 = sigma_data * sigma_data
    s2 = np.asarray(sigma, dtype=np.float64) ** 2
    c_skip = sd2 / (s2 + sd2)
    c_out = np.sqrt(s2) * sigma_data / np.sqrt(s2 + sd2)
    return c_skip * x + c_out * raw_net_output


# ---------------------------------------------------------------------------
# burst feature conditioning
# ---------------------------------------------------------------------------

N_COND_CHANNELS = 8  # 4 weighted-mean planes + 4 spread planes

_SMOOTH_K = np.outer([1.0, 2.0, 1.0], [1.0, 2.0, 1.0]) / 16.0


@dataclass
class ConditioningFeatures:
    """Fused burst features at full, half and quarter output resolution."""

    scales: list  # three arrays [8, H/2^k, W/2^k]

    def __post_init__(self):
        h0, w0 = self.scales[0].shape[-2:]
        for k, s in enumerate(self.scales):
            if s.shape[-2:] != (h0 // 2**k, w0 // 2**k):
                raise ValueError(f"scale {k} has dims {s.shape[-2:]}, expected {(h0 // 2**k, w0 // 2**k)}")


def encode_burst(stack: BurstStack, align: AlignmentEstimate, scale_factor: int) -> ConditioningFeatures:
    """Fuse aligned frames into multi-scale conditioning features.

    Weighted mean and weighted std are computed per pixel over frames (in
    float64 so the result is independent of frame order), rescaled by bicubic
    interpolation to the three decoder scales, and lightly smoothed.
    """
    if align.n_frames != stack.n_frames:
        raise ValueError("alignment does not cover all frames")
    weights = np.asarray(align.confidences, dtype=np.float64)
    if weights.sum() <= 0:
        weights = np.ones(stack.n_frames)
    weights = weights / weights.sum()

    aligned = []
    for frame, (dx, dy) in zip(stack.frames, align.shifts):
        if dx == 0 and dy == 0:
            aligned.append(frame.astype(np.float64))
        else:
            aligned.append(warp_affine(frame, -dx, -dy, 0.0).astype(np.float64))
    frames = np.stack(aligned)  # [N, 4, h, w]

    wmean = np.einsum("n,nchw->chw", weights, frames)
    wvar = np.einsum("n,nchw->chw", weights, (frames - wmean) ** 2)
    fused = np.concatenate([wmean, np.sqrt(wvar)]).astype(np.float32)  # [8, h, w]

    h = fused.shape[1]
    hr_h = 2 * scale_factor * h
    scales = []
    for k in range(3):
        target = hr_h // 2**k
        feat = resize_bicubic(fused, target / h)
        feat = np.stack([nd_convolve(feat[c], _SMOOTH_K, mode="nearest") for c in range(feat.shape[0])])
        scales.append(feat.astype(np.float32))
    return ConditioningFeatures(scales=scales)


def _cond_to_batch(cond, batch: int):
    """Normalize cond to three [B,8,h,w] arrays (or None)."""
    if cond is None:
        return None
    if isinstance(cond, ConditioningFeatures):
        return [np.broadcast_to(s[None], (batch,) + s.shape).copy() for s in cond.scales]
    if isinstance(cond, (list, tuple)) and all(isinstance(c, ConditioningFeatures) for c in cond):
        if len(cond) != batch:
            raise ValueError(f"got {len(cond)} conditioning sets for batch {batch}")
        return [np.stack([c.scales[k] for c in cond]) for k in range(3)]
    raise TypeError(f"unsupported conditioning type {type(cond)}")


# ---------------------------------------------------------------------------
# trainable denoisers
# ---------------------------------------------------------------------------

class _SftBlock:
    """1x1 head mapping conditioning features to (gamma, beta); modulation is
    f * (1 + cond_scale * gamma_hat) + cond_scale * beta_hat so an untrained
    head is a near-identity."""

    def __init__(self, channels: int, rng: RngStream, name: str, cond_scale: float, dtype):
        self.head = Conv2d(N_COND_CHANNELS, 2 * channels, 1, rng, name, dtype=dtype)
        self.channels = channels
        self.cond_scale = cond_scale
        self._cache = None

    def params(self):
        return self.head.params()

    def forward(self, f: np.ndarray, cond_feat: np.ndarray | None) -> np.ndarray:
        if cond_feat is None:
            self._cache = None
            return f
        gb = self.head.forward(cond_feat)
        gamma_hat = gb[:, : self.channels]
        beta_hat = gb[:, self.channels:]
        self._cache = (f, gamma_hat)
        return f * (1.0 + self.cond_scale * gamma_hat) + self.cond_scale * beta_hat

    def backward(self, dy: np.ndarray) -> np.ndarray:
        if self._cache is None:
            return dy
        f, gamma_hat = self._cache
        df = dy * (1.0 + self.cond_scale * gamma_hat)
        dgb = np.concatenate([dy * f * self.cond_scale, dy * self.cond_scale], axis=1)
        self.head.backward(dgb)  # grads for the head; cond itself is fixed input
        return df


class TinyDenoiser:
    """Three-level convolutional encoder-decoder with additive skips and
    per-scale burst-feature modulation. Operates on [3,H,W] images with H, W
    divisible by 4."""

    kind = "tiny"

    def __init__(self, rng: RngStream | None = None, sigma_data: float = 0.5,
                 cond_scale: float = 1.0, dtype=np.float32):
        if rng is None:
            rng = RngStream(seed=0, stream_id=77)
        self.sigma_data = float(sigma_data)
        self.cond_scale = float(cond_scale)
        self.dtype = dtype
        r = rng
        self.enc0a = Conv2d(4, 16, 3, r, "enc0a", dtype=dtype)
        self.enc0b = Conv2d(16, 16, 3, r, "enc0b", dtype=dtype)
        self.enc1 = Conv2d(16, 32, 3, r, "enc1", dtype=dtype)
        self.enc2 = Conv2d(32, 64, 3, r, "enc2", dtype=dtype)
        self.bott = Conv2d(64, 64, 3, r, "bott", dtype=dtype)
        self.sft2 = _SftBlock(64, r, "sft2", cond_scale, dtype)
        self.up1 = Conv2d(64, 32, 3, r, "up1", dtype=dtype)
        self.sft1 = _SftBlock(32, r, "sft1", cond_scale, dtype)
        self.dec1 = Conv2d(32, 32, 3, r, "dec1", dtype=dtype)
        self.up0 = Conv2d(32, 16, 3, r, "up0", dtype=dtype)
        self.sft0 = _SftBlock(16, r, "sft0", cond_scale, dtype)
        self.dec0 = Conv2d(16, 16, 3, r, "dec0", dtype=dtype)
        self.head = Conv2d(16, 3, 3, r, "head", dtype=dtype)
        self.pool1 = AvgPool2()
        self.pool2 = AvgPool2()
        self.up_b = Upsample2()
        self.up_d = Upsample2()
        self.acts = [SiLU() for _ in range(9)]

    def params(self):
        out = []
        for blk in (self.enc0a, self.enc0b, self.enc1, self.enc2, self.bott,
                    self.sft2, self.up1, self.sft1, self.dec1,
                    self.up0, self.sft0, self.dec0, self.head):
            out.extend(blk.params())
        return out

    # -- raw network ---------------------------------------------------

    def forward_raw(self, x_in: np.ndarray, cond_scales) -> np.ndarray:
        a = self.acts
        e0 = a[1].forward(self.enc0b.forward(a[0].forward(self.enc0a.forward(x_in))))
        e1 = a[2].forward(self.enc1.forward(self.pool1.forward(e0)))
        e2 = a[3].forward(self.enc2.forward(self.pool2.forward(e1)))
        b = a[4].forward(self.bott.forward(e2))
        b = self.sft2.forward(b, None if cond_scales is None else cond_scales[2])

        u1 = a[5].forward(self.up1.forward(self.up_b.forward(b)))
        u1 = self.sft1.forward(u1 + e1, None if cond_scales is None else cond_scales[1])
        d1 = a[6].forward(self.dec1.forward(u1))

        u0 = a[7].forward(self.up0.forward(self.up_d.forward(d1)))
        u0 = self.sft0.forward(u0 + e0, None if cond_scales is None else cond_scales[0])
        d0 = a[8].forward(self.dec0.forward(u0))
        return self.head.forward(d0)

    def backward_raw(self, d_out: np.ndarray) -> np.ndarray:
        a = self.acts
        dd0 = self.head.backward(d_out)
        du0 = self.sft0.backward(self.dec0.backward(a[8].backward(dd0)))
        de0 = du0.copy()
        dd1 = self.up_d.backward(self.up0.backward(a[7].backward(du0)))
        du1 = self.sft1.backward(self.dec1.backward(a[6].backward(dd1)))
        de1 = du1.copy()
        db = self.sft2.backward(self.up_b.backward(self.up1.backward(a[5].backward(du1))))
        de2 = self.bott.backward(a[4].backward(db))
        de1 += self.pool2.backward(self.enc2.backward(a[3].backward(de2)))
        de0 += self.pool1.backward(self.enc1.backward(a[2].backward(de1)))
        return self.enc0a.backward(a[0].backward(self.enc0b.backward(a[1].backward(de0))))

    # -- denoiser interface ---------------------------------------------

    def preconditioners(self, sigma):
        s = np.atleast_1d(np.asarray(sigma, dtype=np.float64))
        sd2 = self.sigma_data**2
        c_skip = sd2 / (s**2 + sd2)
        c_out = s * self.sigma_data / np.sqrt(s**2 + sd2)
        c_in = 1.0 / np.sqrt(s**2 + sd2)
        with np.errstate(divide="ignore"):
            c_noise = np.where(s > 0, np.log(np.maximum(s, 1e-300)) / 4.0, 0.0)
        return c_skip, c_out, c_in, c_noise

    def net_input(self, x: np.ndarray, sigma) -> np.ndarray:
        """[B,3,H,W] + sigma -> [B,4,H,W] preconditioned input with a
        noise-level channel appended."""
        _, _, c_in, c_noise = self.preconditioners(sigma)
        b, _, h, w = x.shape
        c_in = c_in.reshape(-1, 1, 1, 1)
        noise_ch = np.broadcast_to(
            c_noise.reshape(-1, 1, 1, 1).astype(x.dtype), (b, 1, h, w)
        )
        return np.concatenate([(c_in * x).astype(x.dtype), noise_ch], axis=1)

    def evaluate(self, x: np.ndarray, sigma, cond=None) -> np.ndarray:
        single = x.ndim == 3
        xb = x[None] if single else x
        s = np.atleast_1d(np.asarray(sigma, dtype=np.float64))
        if np.all(s == 0):
            return x.copy()
        cond_scales = _cond_to_batch(cond, xb.shape[0])
        raw = self.forward_raw(self.net_input(xb, sigma), cond_scales)
        c_skip, c_out, _, _ = self.preconditioners(sigma)
        out = c_skip.reshape(-1, 1, 1, 1) * xb + c_out.reshape(-1, 1, 1, 1) * raw
        out = out.astype(x.dtype)
        return out[0] if single else out

    def copy(self) -> "TinyDenoiser":
        clone = TinyDenoiser(RngStream(0, 1), self.sigma_data, self.cond_scale, self.dtype)
        for dst, src in zip(clone.params(), self.params()):
            dst.value = src.value.copy()
            dst.grad = np.zeros_like(src.value)
        return clone


class MlpDenoiser:
    """Dense denoiser for flat vectors (the 1-D/2-D toy problems); same
    preconditioning as the convolutional model, no spatial conditioning."""

    kind = "mlp"

    def __init__(self, dim: int, rng: RngStream | None = None, hidden: int = 64,
                 sigma_data: float = 0.5, dtype=np.float64):
        if rng is None:
            rng = RngStream(seed=0, stream_id=78)
        self.dim = dim
        self.hidden = hidden
        self.sigma_data = float(sigma_data)
        self.dtype = dtype
        self.fc1 = Dense(dim + 1, hidden, rng, "fc1", dtype=dtype)
        self.fc2 = Dense(hidden, hidden, rng, "fc2", dtype=dtype)
        self.fc3 = Dense(hidden, dim, rng, "fc3", dtype=dtype)
        self.a1 = SiLU()
        self.a2 = SiLU()

    def params(self):
        return self.fc1.params() + self.fc2.params() + self.fc3.params()

    def preconditioners(self, sigma):
        s = np.atleast_1d(np.asarray(sigma, dtype=np.float64))
        sd2 = self.sigma_data**2
        c_skip = sd2 / (s**2 + sd2)
        c_out = s * self.sigma_data / np.sqrt(s**2 + sd2)
        c_in = 1.0 / np.sqrt(s**2 + sd2)
        with np.errstate(divide="ignore"):
            c_noise = np.where(s > 0, np.log(np.maximum(s, 1e-300)) / 4.0, 0.0)
        return c_skip, c_out, c_in, c_noise

    def net_input(self, x: np.ndarray, sigma) -> np.ndarray:
        _, _, c_in, c_noise = self.preconditioners(sigma)
        b = x.shape[0]
        noise_col = np.broadcast_to(c_noise.reshape(-1, 1).astype(x.dtype), (b, 1))
        return np.concatenate([(c_in.reshape(-1, 1) * x).astype(x.dtype), noise_col], axis=1)

    def forward_raw(self, x_in: np.ndarray, cond_scales=None) -> np.ndarray:
        h = self.a1.forward(self.fc1.forward(x_in))
        h = self.a2.forward(self.fc2.forward(h))
        return self.fc3.forward(h)

    def backward_raw(self, d_out: np.ndarray) -> np.ndarray:
        dh = self.fc2.backward(self.a2.backward(self.fc3.backward(d_out)))
        return self.fc1.backward(self.a1.backward(dh))

    def evaluate(self, x: np.ndarray, sigma, cond=None) -> np.ndarray:
        single = x.ndim == 1
        xb = x[None] if single else x
        s = np.atleast_1d(np.asarray(sigma, dtype=np.float64))
        if np.all(s == 0):
            return x.copy()
        raw = self.forward_raw(self.net_input(xb, sigma))
        c_skip, c_out, _, _ = self.preconditioners(sigma)
        out = (c_skip.reshape(-1, 1) * xb + c_out.reshape(-1, 1) * raw).astype(x.dtype)
        return out[0] if single else out

    def copy(self) -> "MlpDenoiser":
        clone = MlpDenoiser(self.dim, RngStream(0, 1), self.hidden, self.sigma_data, self.dtype)
        for dst, src in zip(clone.params(), self.params()):
            dst.value = src.value.copy()
            dst.grad = np.zeros_like(src.value)
        return clone
