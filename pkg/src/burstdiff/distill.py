"""Consistency distillation: train a one-step student from a multi-step
teacher trajectory.

Each iteration picks an adjacent pair of ladder levels (sigma_hi > sigma_lo),
forms the higher-noise point by fresh noising, advances it one teacher Heun
step to the lower level, and pulls the student's output at the higher level
toward the EMA target-student's output at the lower level. The key knob is
what the fresh noise is centered on: ``from_init_sr`` noises around the
deterministic initial SR estimate (the regime the deployed sampler actually
traverses), ``from_noise`` noises around the clean data with a ladder wide
enough that sampling can start from pure noise.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .metrics import wasserstein2_2d
from .nn import Adam
from .samplers import cm_sample
from .schedules import EdmSchedule, make_edm
from .tensorops import RngStream

INIT_MODES = ("from_init_sr", "from_noise")


@dataclass
class DistillRecord:
    x0: np.ndarray          # clean target
    init: np.ndarray        # deterministic initial estimate
    cond: object = None     # ConditioningFeatures or None


@dataclass
class DistillConfig:
    teacher_schedule: EdmSchedule
    ema_decay: float = 0.99
    n_iters: int = 1500
    loss: str = "pseudo-huber"      # or "l2"
    huber_c: float = 0.03
    init_mode: str = "from_init_sr"
    seed: int = 0
    lr: float = 1e-3
    batch_size: int = 8

    def __post_init__(self):
        if not (0.9 <= self.ema_decay <= 0.99999):
            raise ValueError(f"ema_decay must be in [0.9, 0.99999], got {self.ema_decay}")
        if self.init_mode not in INIT_MODES:
            raise ValueError(f"init_mode must be one of {INIT_MODES}")
        if self.loss not in ("pseudo-huber", "l2"):
            raise ValueError(f"unknown loss {self.loss!r}")


def _loss_and_grad(diff: np.ndarray, kind: str, c: float):
    if kind == "l2":
        return float(np.mean(diff * diff, dtype=np.float64)), (2.0 / diff.size) * diff
    root = np.sqrt(diff * diff + c * c)
    loss = float(np.mean(root - c, dtype=np.float64))
    return loss, (diff / root) / diff.size


def _bshape(sigma, ndim: int):
    return np.asarray(sigma, dtype=np.float64).reshape((-1,) + (1,) * (ndim - 1))


def _teacher_heun_step(teacher, x, sigma_hi, sigma_lo, cond):
    """One second-order step from per-sample levels sigma_hi down to sigma_lo."""
    hi = _bshape(sigma_hi, x.ndim)
    lo = _bshape(sigma_lo, x.ndim)
    d0 = (x - teacher.evaluate(x, sigma_hi, cond).astype(np.float64)) / hi
    x_e = x + (lo - hi) * d0
    d1 = (x_e - teacher.evaluate(x_e.astype(x.dtype), sigma_lo, cond).astype(np.float64)) / lo
    return x + (lo - hi) * 0.5 * (d0 + d1)


def ema_gap_bound(update_norms, decay: float) -> float:
    """Largest gap ||theta_ema - theta|| the decay admits after the logged
    updates: sum_r decay^(t-r+1) * ||delta_r||."""
    bound = 0.0
    for nrm in update_norms:
        bound = decay * (bound + nrm)
    return bound


def consistency_distill(teacher, student, data, cfg: DistillConfig):
    """Distill ``teacher`` into ``student`` on the given records.

    Returns the student with a ``distill_history`` dict attached (loss,
    update norms, EMA gap). Raises on non-finite loss.
    """
    if len(data) == 0:
        raise ValueError("empty distillation dataset")
    if cfg.n_iters == 0:
        return student
    rng = RngStream(seed=cfg.seed, stream_id=21)
    sigmas = [float(s) for s in cfg.teacher_schedule.sigmas if s > 0]
    if len(sigmas) < 2:
        raise ValueError("distillation ladder needs at least two positive levels")
    opt = Adam(student.params(), lr=cfg.lr)
    ema = student.copy()
    dtype = getattr(student, "dtype", np.float32)

    sigma_arr = np.asarray(sigmas)
    history = {"loss": [], "update_norm": [], "ema_gap": []}
    for it in range(cfg.n_iters):
        idx = rng.integers(cfg.batch_size, len(data))
        levels = rng.integers(cfg.batch_size, len(sigmas) - 1)  # per-sample pairs
        sigma_hi = sigma_arr[levels]
        sigma_lo = sigma_arr[levels + 1]

        x0 = np.stack([data[i].x0 for i in idx]).astype(dtype)
        center = x0 if cfg.init_mode == "from_noise" else np.stack(
            [data[i].init for i in idx]).astype(dtype)
        cond = None
        cond_scales = None
        if data[idx[0]].cond is not None:
            cond = [data[i].cond for i in idx]
            cond_scales = [np.stack([c.scales[k] for c in cond]) for k in range(3)]

        eps = rng.normal(x0.shape, dtype=np.float64).astype(dtype)
        bshape = (-1,) + (1,) * (x0.ndim - 1)
        x_hi = center.astype(np.float64) + sigma_hi.reshape(bshape) * eps.astype(np.float64)
        x_lo = _teacher_heun_step(teacher, x_hi, sigma_hi, sigma_lo, cond)
        target = ema.evaluate(x_lo.astype(dtype), sigma_lo, cond).astype(np.float64)

        x_hi = x_hi.astype(dtype)
        raw = student.forward_raw(student.net_input(x_hi, sigma_hi), cond_scales)
        c_skip, c_out, _, _ = student.preconditioners(sigma_hi)
        out = c_skip.reshape(bshape) * x_hi + c_out.reshape(bshape) * raw
        diff = out.astype(np.float64) - target
        loss, dout = _loss_and_grad(diff, cfg.loss, cfg.huber_c)
        if not math.isfinite(loss):
            raise RuntimeError(f"non-finite distillation loss at iter {it}")

        opt.zero_grad()
        student.backward_raw((dout * c_out.reshape(bshape)).astype(dtype))
        before = [p.value.copy() for p in student.params()]
        opt.step()

        upd = math.sqrt(sum(float(np.sum((p.value - b) ** 2)) for p, b in zip(student.params(), before)))
        for p_ema, p in zip(ema.params(), student.params()):
            p_ema.value = cfg.ema_decay * p_ema.value + (1.0 - cfg.ema_decay) * p.value
        gap = math.sqrt(sum(float(np.sum((pe.value - p.value) ** 2))
                            for pe, p in zip(ema.params(), student.params())))
        history["loss"].append(loss)
        history["update_norm"].append(upd)
        history["ema_gap"].append(gap)

    student.distill_history = history
    return student


# ---------------------------------------------------------------------------
# initialization ablation
# ---------------------------------------------------------------------------

@dataclass
class AblationReport:
    modes: tuple
    distances: tuple            # metric per arm, same order as modes
    delta: float                # distances[1] - distances[0]
    ci95: tuple                 # bootstrap CI of delta
    n_boot: int
    metric: str = "w2"
    extras: dict = field(default_factory=dict)


def distill_ablation(
    teacher,
    student_proto,
    data,
    cfg: DistillConfig,
    reference_samples: np.ndarray,
    eval_inits: np.ndarray,
    noise_sigma_max: float = 80.0,
    init_modes: tuple = INIT_MODES,
    n_boot: int = 200,
    boot_size: int = 256,
    seed: int = 0,
) -> AblationReport:
    """Distill one student per init mode under identical budgets and compare
    their one-step samples to reference samples by W2 (vector toys).

    The from_init_sr arm samples from the skip level around held-out inits;
    the from_noise arm samples from pure noise at ``noise_sigma_max`` with a
    ladder rebuilt over the full range (same number of levels).
    """
    arms = []
    for mode in init_modes:
        if mode == "from_noise":
            sched = make_edm(cfg.teacher_schedule.n_steps, noise_sigma_max,
                             cfg.teacher_schedule.sigma_min, cfg.teacher_schedule.rho)
        else:
            sched = cfg.teacher_schedule
        arm_cfg = DistillConfig(
            teacher_schedule=sched, ema_decay=cfg.ema_decay, n_iters=cfg.n_iters,
            loss=cfg.loss, huber_c=cfg.huber_c, init_mode=mode, seed=cfg.seed,
            lr=cfg.lr, batch_size=cfg.batch_size,
        )
        student = consistency_distill(teacher, student_proto.copy(), data, arm_cfg)
        arms.append((mode, student))

    samples = []
    for mode, student in arms:
        # common random numbers across arms: identical students then produce
        # identical samples, and comparisons see less bootstrap variance
        rng = RngStream(seed=seed, stream_id=500)
        if mode == "from_noise":
            start = np.zeros_like(eval_inits)
            sig0 = noise_sigma_max
        else:
            start = eval_inits
            sig0 = cfg.teacher_schedule.sigma_max
        samples.append(cm_sample(start, student, [sig0], rng))

    dists = tuple(wasserstein2_2d(s, reference_samples) for s in samples)

    boot_rng = RngStream(seed=seed, stream_id=999)
    deltas = []
    n_ref = len(reference_samples)
    for _ in range(n_boot):
        sel_ref = boot_rng.integers(boot_size, n_ref)
        sel = [boot_rng.integers(boot_size, len(s)) for s in samples]
        d = [wasserstein2_2d(s[i], reference_samples[sel_ref]) for s, i in zip(samples, sel)]
        deltas.append(d[1] - d[0])
    deltas = np.sort(np.asarray(deltas))
    lo = float(deltas[int(0.025 * n_boot)])
    hi = float(deltas[min(int(0.975 * n_boot), n_boot - 1)])
    return AblationReport(
        modes=tuple(m for m, _ in arms),
        distances=dists,
        delta=float(dists[1] - dists[0]),
        ci95=(lo, hi),
        n_boot=n_boot,
        extras={"students": tuple(s for _, s in arms)},
    )
