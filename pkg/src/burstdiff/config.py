"""Experiment configuration: flat ``key = value`` text files, provenance-tagged
defaults, and content hashing for reproducible run directories.

Every field carries a provenance tag surfaced by ``config dump``:

* ``method-default`` — values fixed by the sampling/distillation method family
  (step counts, sigma ranges, preconditioning constants).
* ``protocol``       — values fixed by the synthetic degradation protocol
  (burst size, motion bounds, crop geometry).
* ``chosen``         — desk-scale choices made for this artifact.

``BDL_SEED`` in the environment overrides the configured seed.
"""

from __future__ import annotations

import hashlib
import os
from dataclasses import dataclass, fields
from pathlib import Path

_SWEEP_SIGMA_MAX = "80,0.2,0.08,0.05,0.03,0.01,0.005"
_SWEEP_TAU = "1,2,3,5,10,20,40"
_SWEEP_T_CM = "1,2,3,4,5,11"


@dataclass
class ExperimentConfig:
    # dataset
    n_images: int = 24
    hr_size: int = 64
    scale_factor: int = 4
    burst_size: int = 8
    max_translation: float = -1.0   # <0 -> derived as 24 * hr_size / 256
    max_rotation: float = 1.0
    noise_sigma: float = 0.05
    # paths
    data_dir: str = "data"
    ckpt_teacher: str = "ckpt/teacher"
    ckpt_student: str = "ckpt/student"
    out_dir: str = "runs"
    # sampler
    sampler: str = "edm"            # edm | ddpm | cm
    tau: int = 40
    sigma_max: float = 0.03
    sigma_min: float = 0.002
    rho: float = 7.0
    t_cm: int = 1
    churn: float = 0.0
    # ddpm arm
    ddpm_t: int = 1000
    ddpm_beta_start: float = 1e-4
    ddpm_beta_end: float = 0.02
    # training
    train_steps: int = 1500
    batch_size: int = 4
    lr: float = 2e-3
    sigma_data: float = 0.5
    sigma_max_train: float = 0.5
    cond_scale: float = 1.0
    # distillation
    distill_iters: int = 1200
    distill_levels: int = 12
    ema_decay: float = 0.99
    distill_loss: str = "pseudo-huber"
    huber_c: float = 0.03
    init_mode: str = "init-sr"      # init-sr | noise
    warm_start: bool = True
    # seeds & sweeps
    seed: int = 0
    sweep_sigma_max: str = _SWEEP_SIGMA_MAX
    sweep_tau: str = _SWEEP_TAU
    sweep_t_cm: str = _SWEEP_T_CM
    # benchmarking
    bench_images: int = 20
    bench_warmup: int = 3

    def __post_init__(self):
        if self.max_translation < 0:
            self.max_translation = 24.0 * self.hr_size / 256.0
        if self.sampler not in ("edm", "ddpm", "cm"):
            raise ValueError(f"unknown sampler {self.sampler!r}")

    def sweep_values(self, axis: str) -> list:
        if axis == "sigma_max":
            return [float(v) for v in self.sweep_sigma_max.split(",")]
        if axis == "tau":
            return [int(v) for v in self.sweep_tau.split(",")]
        if axis == "t_cm":
            return [int(v) for v in self.sweep_t_cm.split(",")]
        raise ValueError(f"unknown sweep axis {axis!r}; use sigma_max, tau or t_cm")


PROVENANCE = {
    "n_images": "chosen", "hr_size": "chosen", "scale_factor": "chosen",
    "burst_size": "protocol", "max_translation": "protocol (24 px at 256 crop, scaled by crop size)",
    "max_rotation": "protocol", "noise_sigma": "chosen",
    "data_dir": "chosen", "ckpt_teacher": "chosen", "ckpt_student": "chosen", "out_dir": "chosen",
    "sampler": "chosen", "tau": "method-default", "sigma_max": "method-default",
    "sigma_min": "method-default", "rho": "method-default", "t_cm": "method-default",
    "churn": "chosen",
    "ddpm_t": "method-default", "ddpm_beta_start": "method-default", "ddpm_beta_end": "method-default",
    "train_steps": "chosen", "batch_size": "chosen", "lr": "chosen",
    "sigma_data": "method-default", "sigma_max_train": "chosen", "cond_scale": "chosen",
    "distill_iters": "chosen", "distill_levels": "chosen", "ema_decay": "chosen",
    "distill_loss": "chosen", "huber_c": "chosen", "init_mode": "chosen", "warm_start": "chosen",
    "seed": "chosen", "sweep_sigma_max": "method-default", "sweep_tau": "chosen",
    "sweep_t_cm": "method-default", "bench_images": "chosen", "bench_warmup": "chosen",
}


def dump_config(cfg: ExperimentConfig) -> str:
    lines = ["# burstdiff experiment configuration"]
    for f in fields(cfg):
        val = getattr(cfg, f.name)
        if isinstance(val, bool):
            val = "true" if val else "false"
        lines.append(f"{f.name} = {val}  # {PROVENANCE[f.name]}")
    return "\n".join(lines) + "\n"


def _coerce(name: str, raw: str, typ):
    raw = raw.strip()
    if typ is bool:
        if raw.lower() in ("true", "1", "yes"):
            return True
        if raw.lower() in ("false", "0", "no"):
            return False
        raise ValueError(f"{name}: cannot parse boolean from {raw!r}")
    if typ is int:
        return int(raw)
    if typ is float:
        return float(raw)
    return raw


def parse_config(text: str) -> ExperimentConfig:
    """Parse flat ``key = value`` lines; ``#`` starts a comment."""
    types = {f.name: type(getattr(ExperimentConfig(), f.name)) for f in fields(ExperimentConfig)}
    values = {}
    for lineno, line in enumerate(text.splitlines(), 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ValueError(f"line {lineno}: expected 'key = value', got {line!r}")
        key, raw = (part.strip() for part in line.split("=", 1))
        if key not in types:
            raise ValueError(f"line {lineno}: unknown key {key!r}")
        values[key] = _coerce(key, raw, types[key])
    cfg = ExperimentConfig(**values)
    return apply_env_overrides(cfg)


def load_config(path) -> ExperimentConfig:
    return parse_config(Path(path).read_text())


def apply_env_overrides(cfg: ExperimentConfig) -> ExperimentConfig:
    env_seed = os.environ.get("BDL_SEED")
    if env_seed is not None:
        cfg.seed = int(env_seed)
    return cfg


def config_hash(cfg: ExperimentConfig) -> str:
    """Short content hash of the full configuration (provenance comments
    excluded so cosmetic tag edits do not invalidate runs)."""
    canon = "\n".join(
        f"{f.name}={getattr(cfg, f.name)}" for f in fields(cfg)
    )
    return hashlib.sha256(canon.encode()).hexdigest()[:12]
