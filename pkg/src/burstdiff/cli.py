"""Command-line front end.

Subcommands mirror the experiment stages: ``simulate`` writes a synthetic
dataset, ``baseline`` reconstructs deterministic initial SR images, ``train``
fits the teacher denoiser, ``distill`` produces the one-step student,
``sample`` reconstructs with a chosen sampler, ``sweep``/``bench`` drive the
metric and runtime grids, ``config dump`` prints every knob with its default
and provenance.
"""

from __future__ import annotations

from pathlib import Path

import click
import numpy as np

from . import btsr
from .baseline import estimate_shifts, fuse_and_upsample
from .burstgen import list_indices, load_hr, load_stack
from .config import ExperimentConfig, apply_env_overrides, config_hash, dump_config, load_config
from .denoiser import encode_burst
from .experiments import (Record, bench_runtime, bench_to_csv, build_records,
                          distill_student, run_dir, run_sweep, simulate_to_dir,
                          train_teacher)
from .samplers import e_bsrd_pipeline
from .tensorops import RngStream
from .training import load_checkpoint, save_checkpoint


def _load_cfg(config_path, **overrides) -> ExperimentConfig:
    cfg = load_config(config_path) if config_path else apply_env_overrides(ExperimentConfig())
    for key, val in overrides.items():
        if val is not None:
            setattr(cfg, key, val)
    return cfg


def _records_from_dir(cfg, data_dir):
    pairs = []
    for i in list_indices(data_dir):
        pairs.append((load_hr(data_dir, i), load_stack(data_dir, i)))
    return build_records(pairs, cfg.scale_factor)


@click.group()
def main():
    """Burst super-resolution by few-step diffusion, at desk scale."""


@main.command()
@click.option("--config", "config_path", type=click.Path(exists=True), default=None)
@click.option("--out", "out_dir", default=None, help="Dataset directory (default: cfg.data_dir).")
@click.option("--n-images", type=int, default=None)
@click.option("--seed", type=int, default=None)
def simulate(config_path, out_dir, n_images, seed):
    """Generate a synthetic RAW burst dataset."""
    cfg = _load_cfg(config_path, n_images=n_images, seed=seed)
    root = out_dir or cfg.data_dir
    indices = simulate_to_dir(cfg, root)
    click.echo(f"wrote {len(indices)} entries under {root}")


@main.command()
@click.option("--config", "config_path", type=click.Path(exists=True), default=None)
@click.option("--data", "data_dir", default=None, help="Dataset directory.")
def baseline(config_path, data_dir):
    """Deterministic burst SR: write init/NNNN.btsr plus PNG previews."""
    cfg = _load_cfg(config_path)
    root = Path(data_dir or cfg.data_dir)
    for i in list_indices(root):
        stack = load_stack(root, i)
        align = estimate_shifts(stack)
        init = fuse_and_upsample(stack, align, cfg.scale_factor)
        btsr.write_btsr(root / "init" / f"{i:04d}.btsr", init)
        btsr.write_png(root / "init" / f"{i:04d}.png", init)
    click.echo(f"wrote initial SR images under {root / 'init'}")


@main.command()
@click.option("--config", "config_path", type=click.Path(exists=True), default=None)
@click.option("--data", "data_dir", default=None)
@click.option("--out", "ckpt", default=None, help="Checkpoint directory (default: cfg.ckpt_teacher).")
@click.option("--steps", type=int, default=None)
@click.option("--seed", type=int, default=None)
def train(config_path, data_dir, ckpt, steps, seed):
    """Train the conditioned denoiser on a simulated dataset."""
    cfg = _load_cfg(config_path, train_steps=steps, seed=seed)
    records = _records_from_dir(cfg, data_dir or cfg.data_dir)
    model = train_teacher(cfg, records)
    out = ckpt or cfg.ckpt_teacher
    save_checkpoint(model, out)
    click.echo(f"trained {cfg.train_steps} steps; final loss "
               f"{model.loss_history[-1]:.5f}; checkpoint at {out}")


@main.command()
@click.option("--config", "config_path", type=click.Path(exists=True), default=None)
@click.option("--data", "data_dir", default=None)
@click.option("--teacher", "teacher_ckpt", default=None)
@click.option("--out", "ckpt", default=None, help="Student checkpoint directory.")
@click.option("--init-mode", type=click.Choice(["init-sr", "noise"]), default=None)
@click.option("--iters", type=int, default=None)
@click.option("--seed", type=int, default=None)
def distill(config_path, data_dir, teacher_ckpt, ckpt, init_mode, iters, seed):
    """Consistency-distill the teacher into a one-step student."""
    cfg = _load_cfg(config_path, init_mode=init_mode, distill_iters=iters, seed=seed)
    records = _records_from_dir(cfg, data_dir or cfg.data_dir)
    teacher = load_checkpoint(teacher_ckpt or cfg.ckpt_teacher)
    student = distill_student(cfg, records, teacher)
    out = ckpt or cfg.ckpt_student
    save_checkpoint(student, out)
    click.echo(f"distilled ({cfg.init_mode}) for {cfg.distill_iters} iters; checkpoint at {out}")


@main.command()
@click.option("--config", "config_path", type=click.Path(exists=True), default=None)
@click.option("--data", "data_dir", default=None)
@click.option("--sampler", type=click.Choice(["ddpm", "edm", "cm"]), default=None)
@click.option("--tau", type=int, default=None)
@click.option("--sigma-max", type=float, default=None)
@click.option("--tcm", "t_cm", type=int, default=None)
@click.option("--churn", type=float, default=None)
@click.option("--seed", type=int, default=None)
@click.option("--out", "out_dir", default=None, help="Output directory (default: runs/<hash>).")
def sample(config_path, data_dir, sampler, tau, sigma_max, t_cm, churn, seed, out_dir):
    """Reconstruct SR images; emits PNG + BTSR and a per-step trace CSV."""
    cfg = _load_cfg(config_path, sampler=sampler, tau=tau, sigma_max=sigma_max,
                    t_cm=t_cm, churn=churn, seed=seed)
    records = _records_from_dir(cfg, data_dir or cfg.data_dir)
    teacher = load_checkpoint(cfg.ckpt_teacher) if cfg.sampler in ("ddpm", "edm") else None
    student = load_checkpoint(cfg.ckpt_student) if cfg.sampler == "cm" else None
    out = Path(out_dir) if out_dir else run_dir(cfg)
    out.mkdir(parents=True, exist_ok=True)
    for r in records:
        rng = RngStream(seed=cfg.seed, stream_id=3000 + r.index)
        img, trace = e_bsrd_pipeline(r.stack, cfg, denoiser=teacher, student=student,
                                     rng=rng, return_trace=True)
        btsr.write_btsr(out / f"sr_{r.index:04d}.btsr", img)
        btsr.write_png(out / f"sr_{r.index:04d}.png", img)
        (out / f"trace_{r.index:04d}.csv").write_text(trace.to_csv())
    click.echo(f"wrote {len(records)} reconstructions under {out}")


@main.command()
@click.option("--config", "config_path", type=click.Path(exists=True), default=None)
@click.option("--data", "data_dir", default=None)
@click.option("--axis", type=click.Choice(["sigma_max", "tau", "t_cm"]), required=True)
@click.option("--seed", type=int, default=None)
def sweep(config_path, data_dir, axis, seed):
    """Metric sweep along one axis; writes sweep_<axis>.csv under runs/<hash>."""
    cfg = _load_cfg(config_path, seed=seed)
    records = _records_from_dir(cfg, data_dir or cfg.data_dir)
    teacher = load_checkpoint(cfg.ckpt_teacher)
    student = load_checkpoint(cfg.ckpt_student) if (axis == "t_cm" or cfg.sampler == "cm") else None
    out = run_dir(cfg)
    if axis == "t_cm":
        cfg.sampler = "cm"
    rows = run_sweep(cfg, axis, records, teacher, student, out_root=out)
    for value, report in rows:
        click.echo(f"{axis}={value}: psnr {report.mean_psnr:.3f} dB, ssim {report.mean_ssim:.4f}")
    click.echo(f"csv under {out}")


@main.command()
@click.option("--config", "config_path", type=click.Path(exists=True), default=None)
@click.option("--data", "data_dir", default=None)
@click.option("--seed", type=int, default=None)
def bench(config_path, data_dir, seed):
    """Runtime comparison: ancestral tau=100 vs second-order tau=40 vs one-step."""
    import copy as _copy

    cfg = _load_cfg(config_path, seed=seed)
    records = _records_from_dir(cfg, data_dir or cfg.data_dir)
    teacher = load_checkpoint(cfg.ckpt_teacher)
    student = load_checkpoint(cfg.ckpt_student)
    arms = []
    ddpm_cfg = _copy.deepcopy(cfg); ddpm_cfg.sampler = "ddpm"; ddpm_cfg.tau = 100
    heun_cfg = _copy.deepcopy(cfg); heun_cfg.sampler = "edm"; heun_cfg.tau = 40
    cm_cfg = _copy.deepcopy(cfg); cm_cfg.sampler = "cm"; cm_cfg.t_cm = 1
    arms = [("ddpm_tau100", ddpm_cfg), ("edm_tau40", heun_cfg), ("cm_tcm1", cm_cfg)]
    results = bench_runtime(arms, records, teacher, student)
    out = run_dir(cfg)
    (out / "bench.csv").write_text(bench_to_csv(results))
    for r in results:
        click.echo(f"{r.label}: {r.secs_per_image:.4f} s/image, {r.calls_per_image:.1f} calls/image")
    click.echo(f"csv under {out}")


@main.group()
def config():
    """Configuration inspection."""


@config.command("dump")
@click.option("--config", "config_path", type=click.Path(exists=True), default=None)
def config_dump(config_path):
    """Print the full configuration with defaults and provenance tags."""
    cfg = _load_cfg(config_path)
    click.echo(dump_config(cfg), nl=False)
    click.echo(f"# config_hash = {config_hash(cfg)}")


if __name__ == "__main__":
    main()
