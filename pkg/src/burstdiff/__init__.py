"""Desk-scale burst super-resolution by few-step diffusion.

A deterministic multi-frame baseline produces an initial SR image; the
diffusion stage refines it starting from an intermediate noise level instead
of pure noise, using either an ancestral chain, a second-order
variance-exploding sampler, or a consistency-distilled one-step student.
"""

from .baseline import AlignmentEstimate, estimate_shifts, fuse_and_upsample
from .burstgen import BurstStack, DegradationParams, mosaic_rggb, synthesize_burst
from .config import ExperimentConfig
from .denoiser import (ConditioningFeatures, MlpDenoiser, TinyDenoiser,
                       edm_precondition, encode_burst, sft_modulate)
from .distill import DistillConfig, consistency_distill, distill_ablation
from .metrics import MetricReport, psnr, ssim, wasserstein2_2d
from .oracles import GaussianPriorOracle, GmmPriorOracle
from .samplers import (SamplerTrace, cm_sample, ddpm_reverse, e_bsrd_pipeline,
                       edm_heun_sample)
from .schedules import (DdpmSchedule, EdmSchedule, ddpm_skip_noise,
                        edm_skip_noise, make_ddpm, make_edm)
from .tensorops import RngStream, gaussian_noise, resize_bicubic, warp_affine
from .training import TrainConfig, load_checkpoint, save_checkpoint, train_denoiser

__version__ = "0.1.0"
