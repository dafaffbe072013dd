"""Reverse-process engines.

Three samplers share the posterior-mean denoiser interface:

* ``ddpm_reverse`` — ancestral sampling from an intermediate step tau down to
  step 1. The denoiser is queried in variance-exploding coordinates
  (x_t / sqrt(abar_t) at sigma_t = sqrt((1-abar_t)/abar_t)) so the same model
  serves both schedule families.
* ``edm_heun_sample`` — stochastic second-order sampler: optional churn
  re-noising, an Euler step along dx/dsigma = (x - D(x; sigma)) / sigma, and a
  trapezoidal correction using the slope at the next level (skipped on the
  final step to sigma = 0).
* ``cm_sample`` — consistency-model sampling: noise the start point to the
  first ladder level, map straight to the clean estimate, optionally repeat
  at decreasing levels.

``e_bsrd_pipeline`` chains alignment, fusion, conditioning, skip-noising and
the selected sampler into the full burst SR reconstruction.
"""

from __future__ import annotations

import time
import zlib
from dataclasses import dataclass, field

import numpy as np

from .baseline import estimate_shifts, fuse_and_upsample
from .burstgen import BurstStack
from .denoiser import encode_burst
from .schedules import (DdpmSchedule, EdmSchedule, ddpm_skip_noise,
                        edm_skip_noise, make_ddpm, make_edm)
from .tensorops import RngStream, gaussian_noise

_VAR_EPS = 1e-20


@dataclass
class SamplerTrace:
    """Per-step instrumentation: noise level, pre-step tensor checksum,
    denoiser calls made during the step, and wall-clock milliseconds."""

    kind: str = ""
    steps: list = field(default_factory=list)  # (index, sigma_or_t, checksum, calls, ms)
    denoiser_calls: int = 0

    def record(self, index: int, level: float, x: np.ndarray, calls: int, ms: float) -> None:
        checksum = zlib.crc32(np.ascontiguousarray(x).tobytes())
        self.steps.append((index, level, checksum, calls, ms))
        self.denoiser_calls += calls

    def to_csv(self) -> str:
        lines = ["step,sigma,calls,ms"]
        for index, level, _, calls, ms in self.steps:
            lines.append(f"{index},{level:.8g},{calls},{ms:.3f}")
        return "\n".join(lines) + "\n"


def expected_calls(kind: str, n_steps: int) -> int:
    """Denoiser-call accounting: Heun pays two calls per step except the last,
    ancestral DDPM and CM pay one per step."""
    if kind == "edm":
        return 2 * n_steps - 1
    if kind in ("ddpm", "cm"):
        return n_steps
    raise ValueError(f"unknown sampler kind {kind!r}")


def ddpm_reverse(
    x_tau: np.ndarray,
    tau: int,
    sched: DdpmSchedule,
    denoiser,
    cond=None,
    rng: RngStream | None = None,
    trace: SamplerTrace | None = None,
) -> np.ndarray:
    """Ancestral reverse chain from step tau to the clean estimate.

    ``rng=None`` disables the per-step noise injections (test hook); the
    injected variance is otherwise sigma_t^2 = beta_t (the upper of the two
    standard choices, which recovers Gaussian priors noticeably better at
    moderate step counts than the lower posterior form).
    """
    if not (1 <= tau <= sched.T):
        raise ValueError(f"tau must be in [1, {sched.T}], got {tau}")
    if trace is None:
        trace = SamplerTrace(kind="ddpm")
    x = x_tau.astype(np.float64)
    for t in range(tau, 0, -1):
        t0 = time.perf_counter()
        pre = x.astype(x_tau.dtype)
        ab_t = sched.alpha_bar(t)
        alpha_t = float(sched.alphas[t - 1])
        beta_t = float(sched.betas[t - 1])
        one_minus_ab = 1.0 - ab_t

        x0_hat = denoiser.evaluate(
            (x / np.sqrt(ab_t)).astype(x_tau.dtype), sched.sigma_ve(t), cond
        ).astype(np.float64)
        if one_minus_ab > _VAR_EPS:
            eps_hat = (x - np.sqrt(ab_t) * x0_hat) / np.sqrt(one_minus_ab)
            mean = (x - beta_t / np.sqrt(one_minus_ab) * eps_hat) / np.sqrt(alpha_t)
        else:
            mean = x / np.sqrt(alpha_t)
        if t > 1 and rng is not None and beta_t > 0:
            mean = mean + np.sqrt(beta_t) * gaussian_noise(rng, x.shape).astype(np.float64)
        x = mean
        if not np.all(np.isfinite(x)):
            raise FloatingPointError(f"non-finite state at ddpm step t={t}")
        trace.record(tau - t, t, pre, 1, (time.perf_counter() - t0) * 1e3)
    return x.astype(x_tau.dtype)


def edm_heun_sample(
    x_init: np.ndarray,
    sched: EdmSchedule,
    denoiser,
    cond=None,
    rng: RngStream | None = None,
    churn: float = 0.0,
    second_order: bool = True,
) -> tuple[np.ndarray, SamplerTrace]:
    """Second-order stochastic sampler along the sigma ladder.

    ``x_init`` must already sit at noise level sched.sigmas[0]. ``churn > 0``
    re-noises each step to sigma * (1 + gamma) before stepping (requires rng).
    ``second_order=False`` keeps plain Euler steps (used by the
    convergence-order checks).
    """
    trace = SamplerTrace(kind="edm" if second_order else "euler")
    x = x_init.astype(np.float64)
    sigmas = sched.sigmas
    n = sched.n_steps
    for i in range(n):
        t0 = time.perf_counter()
        pre = x.astype(x_init.dtype)
        calls = 0
        sigma, sigma_next = float(sigmas[i]), float(sigmas[i + 1])
        sigma_hat = sigma
        if churn > 0 and rng is not None:
            gamma = min(churn / n, np.sqrt(2.0) - 1.0)
            sigma_hat = sigma * (1.0 + gamma)
            bump = np.sqrt(max(sigma_hat**2 - sigma**2, 0.0))
            x = x + bump * gaussian_noise(rng, x.shape).astype(np.float64)

        d0 = (x - denoiser.evaluate(x.astype(x_init.dtype), sigma_hat, cond).astype(np.float64)) / sigma_hat
        calls += 1
        x_next = x + (sigma_next - sigma_hat) * d0
        if second_order and sigma_next > 0:
            d1 = (x_next - denoiser.evaluate(x_next.astype(x_init.dtype), sigma_next, cond).astype(np.float64)) / sigma_next
            calls += 1
            x_next = x + (sigma_next - sigma_hat) * 0.5 * (d0 + d1)
        x = x_next
        if not np.all(np.isfinite(x)):
            raise FloatingPointError(f"non-finite state at edm step {i} (sigma={sigma})")
        trace.record(i, sigma, pre, calls, (time.perf_counter() - t0) * 1e3)
    return x.astype(x_init.dtype), trace


def cm_sigma_ladder(sigma_max: float, t_cm: int) -> list:
    """Default multistep ladder: each added refinement drops the level by 3x."""
    if t_cm < 1:
        raise ValueError("t_cm must be >= 1")
    return [sigma_max / 3.0**k for k in range(t_cm)]


def cm_sample(
    x0p: np.ndarray,
    student,
    sigma_seq,
    rng: RngStream,
    cond=None,
    trace: SamplerTrace | None = None,
) -> np.ndarray:
    """Consistency sampling: noise x0p to sigma_seq[0], map to the clean
    estimate, then refine with noise-and-map rounds at the remaining levels."""
    sigma_seq = list(sigma_seq)
    if len(sigma_seq) == 0:
        raise ValueError("sigma_seq must be nonempty")
    if any(b >= a for a, b in zip(sigma_seq, sigma_seq[1:])):
        raise ValueError(f"sigma_seq must be strictly decreasing, got {sigma_seq}")
    if trace is None:
        trace = SamplerTrace(kind="cm")
    x = edm_skip_noise(x0p, sigma_seq[0], rng)
    x0_hat = x0p
    for k, sigma in enumerate(sigma_seq):
        t0 = time.perf_counter()
        pre = x.astype(x0p.dtype)
        if k > 0:
            x = edm_skip_noise(x0_hat, sigma, rng)
        x0_hat = student.evaluate(x, sigma, cond)
        trace.record(k, sigma, pre, 1, (time.perf_counter() - t0) * 1e3)
    return x0_hat


def e_bsrd_pipeline(
    stack: BurstStack,
    cfg,
    denoiser=None,
    student=None,
    rng: RngStream | None = None,
    return_trace: bool = False,
):
    """Full reconstruction: align, fuse to the initial SR image, encode burst
    conditioning, skip-noise, run the configured sampler, clamp to [0, 1].

    ``cfg`` is an ExperimentConfig (attributes: sampler, tau, sigma_max,
    sigma_min, rho, t_cm, churn, ddpm_t, ddpm_beta_start/end, scale_factor,
    seed). Models default to the checkpoints named by cfg.
    """
    if rng is None:
        rng = RngStream(seed=cfg.seed, stream_id=900)
    align = estimate_shifts(stack)
    init = fuse_and_upsample(stack, align, cfg.scale_factor)
    cond = encode_burst(stack, align, cfg.scale_factor)

    if denoiser is None and cfg.sampler in ("ddpm", "edm"):
        from .training import load_checkpoint
        denoiser = load_checkpoint(cfg.ckpt_teacher)
    if student is None and cfg.sampler == "cm":
        from .training import load_checkpoint
        student = load_checkpoint(cfg.ckpt_student)

    trace = SamplerTrace(kind=cfg.sampler)
    if cfg.sampler == "edm":
        if cfg.sigma_max == 0:
            out = init
        else:
            sigma_min = min(cfg.sigma_min, cfg.sigma_max / 15.0)
            sched = make_edm(cfg.tau, cfg.sigma_max, sigma_min, cfg.rho)
            x = edm_skip_noise(init, cfg.sigma_max, rng)
            out, trace = edm_heun_sample(x, sched, denoiser, cond, rng, churn=cfg.churn)
    elif cfg.sampler == "ddpm":
        sched = make_ddpm(cfg.ddpm_t, cfg.ddpm_beta_start, cfg.ddpm_beta_end)
        x = ddpm_skip_noise(init, cfg.tau, sched, rng)
        out = ddpm_reverse(x, cfg.tau, sched, denoiser, cond, rng, trace=trace)
    elif cfg.sampler == "cm":
        if cfg.sigma_max == 0:
            out = init
        else:
            ladder = cm_sigma_ladder(cfg.sigma_max, cfg.t_cm)
            out = cm_sample(init, student, ladder, rng, cond, trace=trace)
    else:
        raise ValueError(f"unknown sampler {cfg.sampler!r}")

    out = np.clip(out, 0.0, 1.0).astype(np.float32)
    return (out, trace) if return_trace else out
