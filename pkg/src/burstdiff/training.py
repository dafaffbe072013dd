"""Denoiser training (weighted denoising score matching) and checkpoints.

The loss treats the network's raw output as the learning target: for x = x0 +
sigma * eps, the preconditioned denoiser is D = c_skip * x + c_out * F, so
minimizing ||F - (x0 - c_skip * x) / c_out||^2 is the usual weighted MSE with
weight lambda(sigma) = 1 / c_out(sigma)^2, well-conditioned across noise
levels.

Checkpoints are directories: a ``manifest.txt`` naming each parameter tensor
plus metadata lines, and one BTSR file per parameter.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from scipy.special import ndtr, ndtri

from . import btsr
from .denoiser import MlpDenoiser, TinyDenoiser
from .nn import Adam
from .tensorops import RngStream


@dataclass
class TrainConfig:
    steps: int = 2000
    batch_size: int = 4
    lr: float = 2e-3
    sigma_min: float = 0.002
    sigma_max_train: float = 0.5
    lognorm_mean: float = math.log(0.02)
    lognorm_std: float = 1.0
    seed: int = 0


def sample_training_sigma(rng: RngStream, n: int, cfg: TrainConfig) -> np.ndarray:
    """Log-normal noise levels truncated to [sigma_min, sigma_max_train]
    (inverse-CDF truncation, so there are no boundary atoms)."""
    lo = ndtr((math.log(cfg.sigma_min) - cfg.lognorm_mean) / cfg.lognorm_std)
    hi = ndtr((math.log(cfg.sigma_max_train) - cfg.lognorm_mean) / cfg.lognorm_std)
    u = rng.uniform((n,), lo, hi, dtype=np.float64)
    return np.exp(cfg.lognorm_mean + cfg.lognorm_std * ndtri(u))


def denoising_loss_and_grad(model, x0: np.ndarray, sigma: np.ndarray, eps: np.ndarray, cond_scales):
    """Forward + backward of the weighted denoising loss on one batch.

    Returns the scalar loss; parameter gradients accumulate in the model.
    """
    x = x0 + sigma.reshape((-1,) + (1,) * (x0.ndim - 1)) * eps
    c_skip, c_out, _, _ = model.preconditioners(sigma)
    bshape = (-1,) + (1,) * (x0.ndim - 1)
    target = (x0 - c_skip.reshape(bshape) * x) / c_out.reshape(bshape)
    raw = model.forward_raw(model.net_input(x, sigma), cond_scales)
    diff = raw - target
    loss = float(np.mean(diff * diff, dtype=np.float64))
    model.backward_raw((2.0 / diff.size) * diff)
    return loss


def train_denoiser(model, dataset, cfg: TrainConfig, cond_sets=None):
    """Fit the denoiser on (clean tensor, conditioning) pairs.

    ``dataset`` is a list of clean targets (HR images for the conv model,
    vectors for the MLP); ``cond_sets`` optionally holds per-entry
    ConditioningFeatures. Returns the model with a ``loss_history`` list
    attached; raises on non-finite loss.
    """
    if len(dataset) == 0:
        raise ValueError("empty dataset")
    rng = RngStream(seed=cfg.seed, stream_id=11)
    opt = Adam(model.params(), lr=cfg.lr)
    dtype = getattr(model, "dtype", np.float32)
    history = []
    for step in range(cfg.steps):
        idx = rng.integers(cfg.batch_size, len(dataset))
        x0 = np.stack([dataset[i] for i in idx]).astype(dtype)
        sigma = sample_training_sigma(rng, cfg.batch_size, cfg)
        eps = rng.normal(x0.shape, dtype=np.float64).astype(dtype)
        cond_scales = None
        if cond_sets is not None:
            conds = [cond_sets[i] for i in idx]
            cond_scales = [np.stack([c.scales[k] for c in conds]) for k in range(3)]
        opt.zero_grad()
        loss = denoising_loss_and_grad(model, x0, sigma, eps, cond_scales)
        if not math.isfinite(loss):
            raise RuntimeError(f"non-finite training loss {loss} at step {step}")
        opt.step()
        history.append(loss)
    model.loss_history = history
    return model


# ---------------------------------------------------------------------------
# checkpoints
# ---------------------------------------------------------------------------

def save_checkpoint(model, path) -> None:
    path = Path(path)
    path.mkdir(parents=True, exist_ok=True)
    lines = [f"# kind {model.kind}", f"# sigma_data {model.sigma_data:.10g}"]
    if model.kind == "tiny":
        lines.append(f"# cond_scale {model.cond_scale:.10g}")
    else:
        lines.append(f"# dim {model.dim}")
        lines.append(f"# hidden {model.hidden}")
    for i, p in enumerate(model.params()):
        fname = f"p{i:03d}.btsr"
        btsr.write_btsr(path / fname, p.value.astype(np.float32))
        lines.append(f"{p.name} {fname}")
    (path / "manifest.txt").write_text("\n".join(lines) + "\n")


def load_checkpoint(path):
    path = Path(path)
    meta = {}
    entries = []
    for line in (path / "manifest.txt").read_text().splitlines():
        if line.startswith("#"):
            _, key, val = line.split(maxsplit=2)
            meta[key] = val
        elif line.strip():
            name, fname = line.split()
            entries.append((name, fname))
    kind = meta["kind"]
    if kind == "tiny":
        model = TinyDenoiser(sigma_data=float(meta["sigma_data"]), cond_scale=float(meta["cond_scale"]))
    elif kind == "mlp":
        model = MlpDenoiser(dim=int(meta["dim"]), hidden=int(meta["hidden"]),
                            sigma_data=float(meta["sigma_data"]))
    else:
        raise ValueError(f"unknown checkpoint kind {kind!r}")
    params = model.params()
    if len(params) != len(entries):
        raise ValueError(f"checkpoint has {len(entries)} tensors, model needs {len(params)}")
    for p, (name, fname) in zip(params, entries):
        if p.name != name:
            raise ValueError(f"parameter order mismatch: {p.name} vs {name}")
        value = btsr.read_btsr(path / fname)
        if value.shape != p.value.shape:
            raise ValueError(f"{name}: shape {value.shape} != expected {p.value.shape}")
        p.value = value.astype(p.value.dtype)
        p.grad = np.zeros_like(p.value)
    return model
