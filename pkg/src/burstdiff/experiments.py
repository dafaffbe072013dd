"""Experiment orchestration: dataset generation, model preparation, metric
sweeps over sigma_max / tau / t_cm, and runtime benchmarking.

All outputs land under ``<out_dir>/<config-hash>/`` so distinct
configurations never collide; every CSV row embeds the hash.
"""

from __future__ import annotations

import copy
import time
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from . import btsr
from .baseline import estimate_shifts, fuse_and_upsample
from .burstgen import DegradationParams, make_texture, save_entry, synthesize_burst
from .config import ExperimentConfig, config_hash, dump_config
from .denoiser import MlpDenoiser, TinyDenoiser, encode_burst
from .distill import DistillConfig, DistillRecord, consistency_distill
from .metrics import MetricReport, psnr, ssim
from .samplers import e_bsrd_pipeline, expected_calls
from .schedules import make_edm
from .tensorops import RngStream
from .training import TrainConfig, load_checkpoint, save_checkpoint, train_denoiser


@dataclass
class Record:
    """One dataset entry with everything the pipeline stages consume."""
    index: int
    hr: np.ndarray
    stack: object
    init: np.ndarray
    cond: object


def degradation_params(cfg: ExperimentConfig, seed_offset: int = 0) -> DegradationParams:
    return DegradationParams(
        max_translation=cfg.max_translation,
        max_rotation=cfg.max_rotation,
        scale_factor=cfg.scale_factor,
        noise_sigma=cfg.noise_sigma,
        seed=cfg.seed + seed_offset,
        burst_size=cfg.burst_size,
    )


def make_dataset(cfg: ExperimentConfig, n_images: int | None = None, seed_offset: int = 0):
    """Generate (hr, stack) pairs in memory."""
    n = cfg.n_images if n_images is None else n_images
    out = []
    for i in range(n):
        tex_rng = RngStream(seed=cfg.seed + seed_offset, stream_id=1000 + i)
        hr = make_texture(tex_rng, cfg.hr_size)
        params = degradation_params(cfg, seed_offset)
        burst_rng = RngStream(seed=params.seed, stream_id=2000 + i)
        stack = synthesize_burst(hr, params, burst_rng)
        out.append((hr, stack))
    return out


def build_records(pairs, scale_factor: int) -> list:
    """Run alignment, fusion and conditioning once per entry."""
    records = []
    for i, (hr, stack) in enumerate(pairs):
        align = estimate_shifts(stack)
        init = fuse_and_upsample(stack, align, scale_factor)
        cond = encode_burst(stack, align, scale_factor)
        records.append(Record(index=i, hr=hr, stack=stack, init=init, cond=cond))
    return records


def simulate_to_dir(cfg: ExperimentConfig, root) -> list:
    """Materialize the dataset directory layout; returns indices written."""
    root = Path(root)
    pairs = make_dataset(cfg)
    for i, (hr, stack) in enumerate(pairs):
        save_entry(root, i, hr, stack)
    return list(range(len(pairs)))


def train_teacher(cfg: ExperimentConfig, records) -> TinyDenoiser:
    model = TinyDenoiser(
        rng=RngStream(seed=cfg.seed, stream_id=7),
        sigma_data=cfg.sigma_data,
        cond_scale=cfg.cond_scale,
    )
    tcfg = TrainConfig(
        steps=cfg.train_steps, batch_size=cfg.batch_size, lr=cfg.lr,
        sigma_min=cfg.sigma_min, sigma_max_train=cfg.sigma_max_train, seed=cfg.seed,
    )
    dataset = [r.hr for r in records]
    conds = [r.cond for r in records]
    return train_denoiser(model, dataset, tcfg, cond_sets=conds)


def distill_student(cfg: ExperimentConfig, records, teacher: TinyDenoiser) -> TinyDenoiser:
    sigma_min = min(cfg.sigma_min, cfg.sigma_max / 15.0)
    if cfg.init_mode == "noise":
        sched = make_edm(cfg.distill_levels, 80.0, cfg.sigma_min, cfg.rho)
        init_mode = "from_noise"
    else:
        sched = make_edm(cfg.distill_levels, cfg.sigma_max, sigma_min, cfg.rho)
        init_mode = "from_init_sr"
    dcfg = DistillConfig(
        teacher_schedule=sched, ema_decay=cfg.ema_decay, n_iters=cfg.distill_iters,
        loss=cfg.distill_loss, huber_c=cfg.huber_c, init_mode=init_mode,
        seed=cfg.seed, lr=cfg.lr / 2, batch_size=cfg.batch_size,
    )
    student = teacher.copy() if cfg.warm_start else TinyDenoiser(
        rng=RngStream(seed=cfg.seed + 1, stream_id=8),
        sigma_data=cfg.sigma_data, cond_scale=cfg.cond_scale,
    )
    data = [DistillRecord(x0=r.hr, init=r.init, cond=r.cond) for r in records]
    return consistency_distill(teacher, student, data, dcfg)


def run_dir(cfg: ExperimentConfig) -> Path:
    d = Path(cfg.out_dir) / config_hash(cfg)
    d.mkdir(parents=True, exist_ok=True)
    (d / "config.txt").write_text(dump_config(cfg))
    return d


# ---------------------------------------------------------------------------
# sweeps
# ---------------------------------------------------------------------------

def _evaluate_config(cfg: ExperimentConfig, records, teacher, student) -> MetricReport:
    report = MetricReport()
    for r in records:
        rng = RngStream(seed=cfg.seed, stream_id=3000 + r.index)
        out = e_bsrd_pipeline(r.stack, cfg, denoiser=teacher, student=student, rng=rng)
        report.add(f"{r.index:04d}", psnr(out, r.hr), ssim(out, r.hr))
    return report


def run_sweep(cfg: ExperimentConfig, axis: str, records, teacher, student=None,
              out_root=None, save_images: bool = True):
    """One metric row per sweep value; rows are deterministic in (cfg, axis).

    Returns [(value, MetricReport)] and writes sweep_<axis>.csv (plus one
    sample PNG per value when requested) under the run directory.
    """
    values = cfg.sweep_values(axis)
    rows = []
    for value in values:
        row_cfg = copy.deepcopy(cfg)
        setattr(row_cfg, {"sigma_max": "sigma_max", "tau": "tau", "t_cm": "t_cm"}[axis], value)
        report = _evaluate_config(row_cfg, records, teacher, student)
        rows.append((value, report))

    if out_root is not None:
        d = Path(out_root)
        d.mkdir(parents=True, exist_ok=True)
        lines = [f"config_hash,{axis},mean_psnr_db,std_psnr_db,mean_ssim"]
        for value, report in rows:
            row_cfg = copy.deepcopy(cfg)
            setattr(row_cfg, {"sigma_max": "sigma_max", "tau": "tau", "t_cm": "t_cm"}[axis], value)
            lines.append(
                f"{config_hash(row_cfg)},{value},{report.mean_psnr:.6f},"
                f"{report.std_psnr:.6f},{report.mean_ssim:.6f}"
            )
        (d / f"sweep_{axis}.csv").write_text("\n".join(lines) + "\n")
        if save_images and records:
            for value, _ in rows:
                row_cfg = copy.deepcopy(cfg)
                setattr(row_cfg, {"sigma_max": "sigma_max", "tau": "tau", "t_cm": "t_cm"}[axis], value)
                rng = RngStream(seed=cfg.seed, stream_id=3000 + records[0].index)
                out = e_bsrd_pipeline(records[0].stack, row_cfg, denoiser=teacher,
                                      student=student, rng=rng)
                btsr.write_png(d / f"sample_{axis}_{value}.png", out)
    return rows


# ---------------------------------------------------------------------------
# runtime benchmarking
# ---------------------------------------------------------------------------

@dataclass
class BenchResult:
    config_id: str
    label: str
    secs_per_image: float
    calls_per_image: float

    def __post_init__(self):
        if self.secs_per_image <= 0:
            raise ValueError("secs_per_image must be positive")


def bench_runtime(configs, records, teacher, student=None, warmup: int | None = None) -> list:
    """Wall-clock secs/image per configuration, single-threaded, first
    ``warmup`` images discarded. ``configs`` is a list of (label, cfg)."""
    results = []
    for label, cfg in configs:
        n_warm = cfg.bench_warmup if warmup is None else warmup
        times = []
        calls = []
        for j, r in enumerate(records):
            rng = RngStream(seed=cfg.seed, stream_id=4000 + j)
            t0 = time.perf_counter()
            _, trace = e_bsrd_pipeline(r.stack, cfg, denoiser=teacher, student=student,
                                       rng=rng, return_trace=True)
            elapsed = time.perf_counter() - t0
            if j >= n_warm:
                times.append(elapsed)
                calls.append(trace.denoiser_calls)
        results.append(BenchResult(
            config_id=config_hash(cfg),
            label=label,
            secs_per_image=float(np.mean(times)),
            calls_per_image=float(np.mean(calls)),
        ))
    return results


def bench_to_csv(results) -> str:
    lines = ["config_hash,label,secs_per_image,calls_per_image"]
    for r in results:
        lines.append(f"{r.config_id},{r.label},{r.secs_per_image:.6f},{r.calls_per_image:.2f}")
    return "\n".join(lines) + "\n"
