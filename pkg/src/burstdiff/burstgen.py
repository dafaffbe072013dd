"""Synthetic RAW burst generation.

An HR RGB image is degraded into a burst of N RAW frames: every non-reference
frame is randomly translated (up to ``max_translation`` HR pixels) and rotated
(up to ``max_rotation`` degrees), box-downsampled by ``scale_factor``,
mosaicked to RGGB planes, and corrupted with Gaussian noise. Ground-truth
offsets ride along with the stack so frames can be regenerated bit-for-bit.

Dataset directory layout:
    hr/NNNN.btsr          HR RGB image [3,H,W]
    burst/NNNN_f{K}.btsr  frame K of the burst [4,h,w]
    meta/NNNN.txt         per-frame offsets, lines "k dx dy theta"
"""

from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import btsr
from .tensorops import RngStream, gaussian_noise, resize_bicubic, warp_affine


@dataclass
class DegradationParams:
    max_translation: float = 6.0   # HR pixels; 24 px at full 256-crop scale
    max_rotation: float = 1.0      # degrees
    scale_factor: int = 4
    noise_sigma: float = 0.05      # high enough that 8-frame fusion visibly wins
    seed: int = 0
    burst_size: int = 8

    def __post_init__(self):
        if self.max_translation < 0:
            raise ValueError("max_translation must be >= 0")
        if self.max_rotation < 0:
            raise ValueError("max_rotation must be >= 0")
        if self.scale_factor not in (2, 4, 8):
            raise ValueError(f"scale_factor must be one of 2, 4, 8, got {self.scale_factor}")
        if not (0.0 <= self.noise_sigma <= 1.0):
            raise ValueError("noise_sigma must be in [0, 1]")
        if self.burst_size < 1:
            raise ValueError("burst_size must be >= 1")


@dataclass
class BurstStack:
    frames: list                      # N arrays [4, h, w], values in [0, 1]
    offsets: list                     # N tuples (dx, dy, theta) at HR scale
    reference_index: int = 0

    def __post_init__(self):
        ref = self.offsets[self.reference_index]
        if any(abs(v) > 0 for v in ref):
            raise ValueError("reference frame must have zero offsets")

    @property
    def n_frames(self) -> int:
        return len(self.frames)


def mosaic_rggb(rgb: np.ndarray) -> np.ndarray:
    """Subsample [3,H,W] RGB to RGGB planes [4,H/2,W/2].

    Plane order: R at (even,even), G at (even,odd), G at (odd,even),
    B at (odd,odd).
    """
    if rgb.ndim != 3 or rgb.shape[0] != 3:
        raise ValueError(f"expected [3,H,W], got {rgb.shape}")
    _, h, w = rgb.shape
    if h % 2 or w % 2:
        raise ValueError(f"H and W must be even for RGGB mosaic, got {h}x{w}")
    return np.stack([
        rgb[0, 0::2, 0::2],
        rgb[1, 0::2, 1::2],
        rgb[1, 1::2, 0::2],
        rgb[2, 1::2, 1::2],
    ]).astype(rgb.dtype)


def box_downsample(img: np.ndarray, factor: int) -> np.ndarray:
    """Average non-overlapping factor x factor blocks of [C,H,W]."""
    c, h, w = img.shape
    if h % factor or w % factor:
        raise ValueError(f"{h}x{w} not divisible by {factor}")
    x = img.reshape(c, h // factor, factor, w // factor, factor)
    return x.mean(axis=(2, 4), dtype=np.float64).astype(img.dtype)


def degrade_frame(
    hr: np.ndarray,
    dx: float,
    dy: float,
    theta: float,
    params: DegradationParams,
    noise_rng: RngStream,
) -> np.ndarray:
    """One frame of the degradation chain: warp, box-downsample, mosaic,
    add noise, clamp. Deterministic given the noise stream state."""
    warped = warp_affine(hr, dx, dy, theta)
    lr = box_downsample(warped, params.scale_factor)
    raw = mosaic_rggb(lr)
    if params.noise_sigma > 0:
        raw = raw + params.noise_sigma * gaussian_noise(noise_rng, raw.shape)
    return np.clip(raw, 0.0, 1.0).astype(np.float32)


def synthesize_burst(hr: np.ndarray, params: DegradationParams, rng: RngStream) -> BurstStack:
    """Generate a burst stack from an HR image.

    Offsets for non-reference frames are drawn from ``rng``; each frame's
    noise comes from a child stream keyed by the frame index, so frames can
    be regenerated independently from the recorded offsets.
    """
    if hr.ndim != 3 or hr.shape[0] != 3:
        raise ValueError(f"expected [3,H,W] HR image, got {hr.shape}")
    _, h, w = hr.shape
    div = 2 * params.scale_factor
    if h % div or w % div:
        raise ValueError(f"H and W must be divisible by {div}, got {h}x{w}")

    offsets = []
    for k in range(params.burst_size):
        if k == 0:
            offsets.append((0.0, 0.0, 0.0))
        else:
            dx = float(rng.uniform((1,), -params.max_translation, params.max_translation, dtype=np.float64)[0])
            dy = float(rng.uniform((1,), -params.max_translation, params.max_translation, dtype=np.float64)[0])
            th = float(rng.uniform((1,), -params.max_rotation, params.max_rotation, dtype=np.float64)[0])
            offsets.append((dx, dy, th))

    frames = [
        degrade_frame(hr, dx, dy, th, params, rng.child(k))
        for k, (dx, dy, th) in enumerate(offsets)
    ]
    return BurstStack(frames=frames, offsets=offsets, reference_index=0)


# ---------------------------------------------------------------------------
# procedural HR sources
# ---------------------------------------------------------------------------

def make_texture(rng: RngStream, size: int) -> np.ndarray:
    """Procedural [3,size,size] HR image in [0.03, 0.97]: smooth color field
    plus geometric shapes plus fine-grained texture."""
    base_res = max(4, size // 8)
    low = rng.normal((3, base_res, base_res), dtype=np.float64)
    smooth = resize_bicubic(low.astype(np.float32), size / base_res).astype(np.float64)

    img = 0.5 + 0.18 * smooth
    ys, xs = np.meshgrid(np.arange(size), np.arange(size), indexing="ij")
    for _ in range(3):
        cy, cx = rng.uniform((2,), 0.15 * size, 0.85 * size, dtype=np.float64)
        r = float(rng.uniform((1,), 0.08 * size, 0.3 * size, dtype=np.float64)[0])
        color = rng.uniform((3,), 0.1, 0.9, dtype=np.float64)
        mask = ((ys - cy) ** 2 + (xs - cx) ** 2) < r * r
        blend = float(rng.uniform((1,), 0.4, 0.9, dtype=np.float64)[0])
        img[:, mask] = (1 - blend) * img[:, mask] + blend * color[:, None]

    fine = rng.normal((3, size, size), dtype=np.float64)
    img = img + 0.03 * fine
    return np.clip(img, 0.03, 0.97).astype(np.float32)


# ---------------------------------------------------------------------------
# dataset persistence
# ---------------------------------------------------------------------------

def save_entry(root, index: int, hr: np.ndarray, stack: BurstStack) -> None:
    root = Path(root)
    btsr.write_btsr(root / "hr" / f"{index:04d}.btsr", hr)
    for k, frame in enumerate(stack.frames):
        btsr.write_btsr(root / "burst" / f"{index:04d}_f{k}.btsr", frame)
    meta = root / "meta" / f"{index:04d}.txt"
    meta.parent.mkdir(parents=True, exist_ok=True)
    with open(meta, "w") as fh:
        for k, (dx, dy, th) in enumerate(stack.offsets):
            fh.write(f"{k} {dx:.10g} {dy:.10g} {th:.10g}\n")


def load_hr(root, index: int) -> np.ndarray:
    return btsr.read_btsr(Path(root) / "hr" / f"{index:04d}.btsr")


def load_stack(root, index: int) -> BurstStack:
    root = Path(root)
    offsets = []
    with open(root / "meta" / f"{index:04d}.txt") as fh:
        for line in fh:
            parts = line.split()
            if len(parts) != 4:
                raise ValueError(f"malformed offset line: {line!r}")
            offsets.append((float(parts[1]), float(parts[2]), float(parts[3])))
    frames = [
        btsr.read_btsr(root / "burst" / f"{index:04d}_f{k}.btsr")
        for k in range(len(offsets))
    ]
    ref = next(i for i, o in enumerate(offsets) if all(v == 0 for v in o))
    return BurstStack(frames=frames, offsets=offsets, reference_index=ref)


def list_indices(root) -> list:
    hr_dir = Path(root) / "hr"
    if not hr_dir.is_dir():
        raise FileNotFoundError(f"no hr/ directory under {root}")
    return sorted(int(p.stem) for p in hr_dir.glob("*.btsr"))
