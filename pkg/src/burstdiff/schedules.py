"""Noise schedules and skip-noising.

Two schedule families live here:

* ``DdpmSchedule`` — discrete beta/alpha/alpha-bar chain. Skip-noising scales
  the clean image by sqrt(alpha_bar_tau) and adds sqrt(1 - alpha_bar_tau)
  standard noise, which lets the reverse process start at step tau instead of T.
* ``EdmSchedule`` — variance-exploding sigma ladder with rho-warped spacing
  between sigma_max and sigma_min, terminated by an exact 0. Skip-noising is
  additive: x + sigma * eps.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .tensorops import RngStream, gaussian_noise


@dataclass(frozen=True)
class DdpmSchedule:
    betas: np.ndarray       # [T], beta_1..beta_T
    alphas: np.ndarray      # [T], 1 - beta_t
    alpha_bars: np.ndarray  # [T+1], alpha_bar_0 = 1, then running products

    @property
    def T(self) -> int:
        return len(self.betas)

    def alpha_bar(self, t: int) -> float:
        return float(self.alpha_bars[t])

    def sigma_ve(self, t: int) -> float:
        """Equivalent variance-exploding noise level at step t:
        x_t / sqrt(abar_t) = x_0 + sigma * eps with sigma = sqrt((1-abar)/abar)."""
        ab = self.alpha_bar(t)
        return float(np.sqrt((1.0 - ab) / ab))

    def to_config(self) -> dict:
        return {
            "ddpm_T": self.T,
            "ddpm_betas": ",".join(f"{b:.8g}" for b in self.betas),
        }


def make_ddpm(T: int, beta_start: float, beta_end: float, allow_zero: bool = False) -> DdpmSchedule:
    """Linear beta schedule, endpoints inclusive.

    ``allow_zero`` admits the degenerate all-zero schedule used by no-noise
    limit tests; production schedules require 0 < beta_start <= beta_end < 1.
    """
    if T < 1:
        raise ValueError(f"T must be >= 1, got {T}")
    if not (0.0 < beta_start <= beta_end < 1.0):
        if not (allow_zero and beta_start == 0.0 and beta_end == 0.0):
            raise ValueError(f"need 0 < beta_start <= beta_end < 1, got ({beta_start}, {beta_end})")
    betas = np.linspace(beta_start, beta_end, T, dtype=np.float64)
    alphas = 1.0 - betas
    alpha_bars = np.concatenate([[1.0], np.cumprod(alphas)])
    return DdpmSchedule(betas=betas, alphas=alphas, alpha_bars=alpha_bars)


def ddpm_skip_noise(
    x0p: np.ndarray,
    tau: int,
    sched: DdpmSchedule,
    rng: RngStream,
    noise: np.ndarray | None = None,
) -> np.ndarray:
    """Jump the clean(ish) image straight to step tau of the forward chain:
    sqrt(abar_tau) * x0p + sqrt(1 - abar_tau) * eps.

    tau = 0 returns x0p unchanged. ``noise`` overrides the fresh draw (test hook).
    """
    if not (0 <= tau <= sched.T):
        raise ValueError(f"tau must be in [0, {sched.T}], got {tau}")
    if tau == 0:
        return x0p
    ab = sched.alpha_bar(tau)
    if noise is None:
        noise = gaussian_noise(rng, x0p.shape)
    out = np.sqrt(ab) * x0p.astype(np.float64) + np.sqrt(1.0 - ab) * noise.astype(np.float64)
    return out.astype(x0p.dtype)


@dataclass(frozen=True)
class EdmSchedule:
    n_steps: int
    sigma_max: float
    sigma_min: float
    rho: float
    sigmas: np.ndarray  # [n_steps + 1], strictly decreasing, sigmas[-1] == 0

    def to_config(self) -> dict:
        return {
            "edm_n_steps": self.n_steps,
            "edm_sigmas": ",".join(f"{s:.8g}" for s in self.sigmas),
        }


def make_edm(n_steps: int, sigma_max: float, sigma_min: float = 0.002, rho: float = 7.0) -> EdmSchedule:
    """rho-warped sigma ladder: sigma_0 = sigma_max down to sigma_{n-1} =
    sigma_min, with an appended exact 0. n_steps = 1 degenerates to
    [sigma_max, 0].
    """
    if n_steps < 1:
        raise ValueError(f"n_steps must be >= 1, got {n_steps}")
    if not (0.0 < sigma_min < sigma_max):
        raise ValueError(f"need 0 < sigma_min < sigma_max, got ({sigma_min}, {sigma_max})")
    if rho < 1.0:
        raise ValueError(f"rho must be >= 1, got {rho}")
    if n_steps == 1:
        sigmas = np.array([sigma_max, 0.0], dtype=np.float64)
    else:
        i = np.arange(n_steps, dtype=np.float64)
        inv = 1.0 / rho
        sigmas = (sigma_max**inv + i / (n_steps - 1) * (sigma_min**inv - sigma_max**inv)) ** rho
        sigmas[0] = sigma_max   # snap endpoints: the rho-power round trip
        sigmas[-1] = sigma_min  # leaves ~1e-17 relative fuzz otherwise
        sigmas = np.concatenate([sigmas, [0.0]])
    return EdmSchedule(n_steps=n_steps, sigma_max=sigma_max, sigma_min=sigma_min, rho=rho, sigmas=sigmas)


def edm_skip_noise(
    x0p: np.ndarray,
    sigma_start: float,
    rng: RngStream,
    noise: np.ndarray | None = None,
) -> np.ndarray:
    """Variance-exploding skip: x0p + sigma_start * eps."""
    if sigma_start < 0:
        raise ValueError(f"sigma_start must be >= 0, got {sigma_start}")
    if sigma_start == 0:
        return x0p
    if noise is None:
        noise = gaussian_noise(rng, x0p.shape)
    out = x0p.astype(np.float64) + sigma_start * noise.astype(np.float64)
    return out.astype(x0p.dtype)
