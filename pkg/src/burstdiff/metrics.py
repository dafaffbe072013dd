"""Image distortion metrics and distributional distances.

PSNR and SSIM follow the usual conventions (SSIM: 11x11 Gaussian window with
sigma 1.5, K1 = 0.01, K2 = 0.03, sample statistics over the valid region).
Wasserstein-2 between small sample sets is computed exactly by solving the
assignment problem on the squared-distance cost matrix; larger sets fall back
to a sliced estimate with 64 fixed projections.

All statistics accumulate in float64 regardless of input dtype.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import linear_sum_assignment
from scipy.signal import convolve2d

#: Sentinel PSNR for identical images (rendered as "identical" in reports).
PSNR_IDENTICAL = math.inf

EXACT_W2_MAX_N = 4096
SLICED_W2_PROJECTIONS = 64


def psnr(a: np.ndarray, b: np.ndarray, peak: float = 1.0) -> float:
    """Peak signal-to-noise ratio in dB; returns the ``identical`` sentinel
    (+inf) when the images match exactly."""
    if a.shape != b.shape:
        raise ValueError(f"shape mismatch: {a.shape} vs {b.shape}")
    diff = a.astype(np.float64) - b.astype(np.float64)
    mse = float(np.mean(diff * diff, dtype=np.float64))
    if mse == 0.0:
        return PSNR_IDENTICAL
    return 10.0 * math.log10(peak * peak / mse)


def _gaussian_window(size: int = 11, sigma: float = 1.5) -> np.ndarray:
    half = (size - 1) / 2.0
    x = np.arange(size, dtype=np.float64) - half
    g = np.exp(-(x * x) / (2.0 * sigma * sigma))
    win = np.outer(g, g)
    return win / win.sum()


def _ssim_single(a: np.ndarray, b: np.ndarray, peak: float, win: np.ndarray) -> float:
    c1 = (0.01 * peak) ** 2
    c2 = (0.03 * peak) ** 2
    mu_a = convolve2d(a, win, mode="valid")
    mu_b = convolve2d(b, win, mode="valid")
    e_aa = convolve2d(a * a, win, mode="valid")
    e_bb = convolve2d(b * b, win, mode="valid")
    e_ab = convolve2d(a * b, win, mode="valid")
    var_a = e_aa - mu_a * mu_a
    var_b = e_bb - mu_b * mu_b
    cov = e_ab - mu_a * mu_b
    s = ((2 * mu_a * mu_b + c1) * (2 * cov + c2)) / ((mu_a**2 + mu_b**2 + c1) * (var_a + var_b + c2))
    return float(np.mean(s, dtype=np.float64))


def ssim(a: np.ndarray, b: np.ndarray, peak: float = 1.0) -> float:
    """Mean local structural similarity.

    Accepts [H,W] or [C,H,W] (channels averaged). Requires H, W >= 11 so the
    window fits.
    """
    if a.shape != b.shape:
        raise ValueError(f"shape mismatch: {a.shape} vs {b.shape}")
    if a.ndim == 2:
        a = a[None]
        b = b[None]
    if a.ndim != 3:
        raise ValueError(f"expected [H,W] or [C,H,W], got {a.shape}")
    h, w = a.shape[1:]
    if h < 11 or w < 11:
        raise ValueError(f"image {h}x{w} smaller than the 11x11 window")
    win = _gaussian_window()
    af = a.astype(np.float64)
    bf = b.astype(np.float64)
    vals = [_ssim_single(af[c], bf[c], peak, win) for c in range(a.shape[0])]
    return float(np.mean(vals))


def w2_method(n: int) -> str:
    return "exact-assignment" if n <= EXACT_W2_MAX_N else "sliced-64"


def wasserstein2_2d(samples_a: np.ndarray, samples_b: np.ndarray) -> float:
    """W2 distance between two equally-sized point clouds in R^d.

    Exact (assignment on the n x n squared-distance matrix) for n <= 4096,
    sliced with 64 deterministic projections beyond that.
    """
    a = np.asarray(samples_a, dtype=np.float64)
    b = np.asarray(samples_b, dtype=np.float64)
    if a.ndim == 1:
        a = a[:, None]
    if b.ndim == 1:
        b = b[:, None]
    if a.shape[0] == 0 or b.shape[0] == 0:
        raise ValueError("empty sample set")
    if a.shape != b.shape:
        raise ValueError(f"sample sets must match in shape: {a.shape} vs {b.shape}")
    n = a.shape[0]
    if n <= EXACT_W2_MAX_N:
        cost = np.sum((a[:, None, :] - b[None, :, :]) ** 2, axis=2)
        rows, cols = linear_sum_assignment(cost)
        return float(np.sqrt(cost[rows, cols].mean()))
    # sliced estimate: mean squared 1-D W2 over fixed equiangular projections
    d = a.shape[1]
    rng = np.random.default_rng(0)
    if d == 2:
        angles = np.linspace(0.0, np.pi, SLICED_W2_PROJECTIONS, endpoint=False)
        dirs = np.stack([np.cos(angles), np.sin(angles)], axis=1)
    else:
        dirs = rng.standard_normal((SLICED_W2_PROJECTIONS, d))
        dirs /= np.linalg.norm(dirs, axis=1, keepdims=True)
    total = 0.0
    for u in dirs:
        pa = np.sort(a @ u)
        pb = np.sort(b @ u)
        total += np.mean((pa - pb) ** 2)
    return float(np.sqrt(total / len(dirs) * d))


@dataclass
class MetricReport:
    """Per-image PSNR/SSIM rows plus aggregates; optionally a W2 value for
    2-D toy comparisons."""

    image_ids: list = field(default_factory=list)
    psnr_db: list = field(default_factory=list)
    ssim_vals: list = field(default_factory=list)
    w2: float | None = None
    w2_method: str | None = None

    def add(self, image_id: str, psnr_value: float, ssim_value: float) -> None:
        if not (-1.0 <= ssim_value <= 1.0):
            raise ValueError(f"SSIM out of range: {ssim_value}")
        self.image_ids.append(image_id)
        self.psnr_db.append(psnr_value)
        self.ssim_vals.append(ssim_value)

    def _finite_psnr(self) -> np.ndarray:
        return np.array([p for p in self.psnr_db if math.isfinite(p)], dtype=np.float64)

    @property
    def mean_psnr(self) -> float:
        vals = self._finite_psnr()
        return float(vals.mean()) if len(vals) else PSNR_IDENTICAL

    @property
    def std_psnr(self) -> float:
        vals = self._finite_psnr()
        return float(vals.std()) if len(vals) else 0.0

    @property
    def mean_ssim(self) -> float:
        return float(np.mean(self.ssim_vals))

    def to_csv(self) -> str:
        lines = ["image_id,psnr_db,ssim"]
        for img_id, p, s in zip(self.image_ids, self.psnr_db, self.ssim_vals):
            p_str = "identical" if not math.isfinite(p) else f"{p:.6f}"
            lines.append(f"{img_id},{p_str},{s:.6f}")
        lines.append(f"mean,{self.mean_psnr:.6f},{self.mean_ssim:.6f}")
        lines.append(f"stddev,{self.std_psnr:.6f},{float(np.std(self.ssim_vals)):.6f}")
        if self.w2 is not None:
            lines.append(f"w2,{self.w2:.6f},{self.w2_method}")
        return "\n".join(lines) + "\n"
