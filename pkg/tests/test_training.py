import math

import numpy as np
import pytest

from burstdiff.baseline import estimate_shifts
from burstdiff.burstgen import DegradationParams, make_texture, synthesize_burst
from burstdiff.denoiser import MlpDenoiser, TinyDenoiser, encode_burst
from burstdiff.tensorops import RngStream, gaussian_noise
from burstdiff.training import (TrainConfig, load_checkpoint, save_checkpoint,
                                sample_training_sigma, train_denoiser)


def _one_sample_setup(seed=0, size=16):
    hr = make_texture(RngStream(seed=seed), size)
    params = DegradationParams(max_translation=1.5, max_rotation=1.0,
                               noise_sigma=0.05, scale_factor=2, seed=seed)
    stack = synthesize_burst(hr, params, RngStream(seed=seed))
    cond = encode_burst(stack, estimate_shifts(stack), 2)
    return hr, cond


class TestSigmaSampling:
    def test_truncation_bounds(self):
        cfg = TrainConfig(sigma_min=0.002, sigma_max_train=0.5)
        s = sample_training_sigma(RngStream(seed=1), 20_000, cfg)
        assert s.min() >= 0.002 and s.max() <= 0.5

    def test_log_normal_center(self):
        cfg = TrainConfig()
        s = sample_training_sigma(RngStream(seed=2), 50_000, cfg)
        # truncation pushes the log-mean up slightly from ln(0.02)
        assert math.log(0.005) < float(np.log(s).mean()) < math.log(0.08)

    def test_deterministic(self):
        cfg = TrainConfig()
        a = sample_training_sigma(RngStream(seed=3), 100, cfg)
        b = sample_training_sigma(RngStream(seed=3), 100, cfg)
        np.testing.assert_array_equal(a, b)


class TestTrainDenoiser:
    def test_overfit_one_sample(self):
        # fixed-seed sanity run: memorizing a single pair drives the
        # denoising error at sigma 0.1 well below the noise floor
        hr, cond = _one_sample_setup()
        model = TinyDenoiser(rng=RngStream(seed=1))
        cfg = TrainConfig(steps=400, batch_size=2, lr=3e-3, seed=0)
        train_denoiser(model, [hr], cfg, cond_sets=[cond])
        assert len(model.loss_history) == 400
        assert model.loss_history[-1] < model.loss_history[0]

        rng = RngStream(seed=5)
        errs = []
        for _ in range(8):
            x = hr + 0.1 * gaussian_noise(rng, hr.shape)
            d = model.evaluate(x, 0.1, cond)
            errs.append(float(np.mean(np.abs(d - hr))))
        assert float(np.mean(errs)) < 0.05

    def test_zero_steps_leave_parameters(self):
        hr, cond = _one_sample_setup(seed=2)
        model = TinyDenoiser(rng=RngStream(seed=3))
        before = [p.value.copy() for p in model.params()]
        train_denoiser(model, [hr], TrainConfig(steps=0), cond_sets=[cond])
        for p, b in zip(model.params(), before):
            np.testing.assert_array_equal(p.value, b)

    def test_nan_input_aborts_with_diagnostic(self):
        hr, cond = _one_sample_setup(seed=4)
        bad = hr.copy()
        bad[0, 0, 0] = np.nan
        model = TinyDenoiser(rng=RngStream(seed=5))
        with pytest.raises(RuntimeError, match="non-finite"):
            train_denoiser(model, [bad], TrainConfig(steps=5), cond_sets=[cond])

    def test_empty_dataset_rejected(self):
        with pytest.raises(ValueError, match="empty"):
            train_denoiser(TinyDenoiser(rng=RngStream(seed=6)), [], TrainConfig(steps=1))

    def test_identity_at_zero_noise_survives_training(self):
        hr, cond = _one_sample_setup(seed=7)
        model = TinyDenoiser(rng=RngStream(seed=8))
        train_denoiser(model, [hr], TrainConfig(steps=30, batch_size=2), cond_sets=[cond])
        x = RngStream(seed=9).normal((3, 16, 16))
        np.testing.assert_allclose(model.evaluate(x, 0.0), x, atol=1e-6)

    def test_mlp_training_runs(self):
        rng = RngStream(seed=10)
        data = [rng.normal((2,), dtype=np.float64) for _ in range(16)]
        model = MlpDenoiser(dim=2, rng=RngStream(seed=11), hidden=16)
        cfg = TrainConfig(steps=200, batch_size=8, lr=3e-3, sigma_max_train=1.0)
        train_denoiser(model, data, cfg)
        assert model.loss_history[-1] < model.loss_history[0]


class TestCheckpoints:
    def test_tiny_round_trip(self, tmp_path):
        hr, cond = _one_sample_setup(seed=12)
        model = TinyDenoiser(rng=RngStream(seed=13), cond_scale=0.7)
        train_denoiser(model, [hr], TrainConfig(steps=10, batch_size=2), cond_sets=[cond])
        save_checkpoint(model, tmp_path / "ckpt")
        back = load_checkpoint(tmp_path / "ckpt")
        assert back.kind == "tiny"
        assert back.cond_scale == pytest.approx(0.7)
        x = RngStream(seed=14).normal((3, 16, 16))
        np.testing.assert_allclose(back.evaluate(x, 0.2, cond), model.evaluate(x, 0.2, cond),
                                   atol=1e-6)

    def test_mlp_round_trip(self, tmp_path):
        model = MlpDenoiser(dim=2, rng=RngStream(seed=15), hidden=16)
        save_checkpoint(model, tmp_path / "m")
        back = load_checkpoint(tmp_path / "m")
        x = RngStream(seed=16).normal((4, 2), dtype=np.float64)
        np.testing.assert_allclose(back.evaluate(x, 0.5), model.evaluate(x, 0.5), atol=1e-6)

    def test_manifest_names_every_tensor(self, tmp_path):
        model = MlpDenoiser(dim=2, rng=RngStream(seed=17), hidden=8)
        save_checkpoint(model, tmp_path / "m")
        manifest = (tmp_path / "m" / "manifest.txt").read_text()
        for p in model.params():
            assert p.name in manifest

    def test_corrupt_manifest_rejected(self, tmp_path):
        model = MlpDenoiser(dim=2, rng=RngStream(seed=18), hidden=8)
        save_checkpoint(model, tmp_path / "m")
        mpath = tmp_path / "m" / "manifest.txt"
        lines = mpath.read_text().splitlines()
        mpath.write_text("\n".join(lines[:-1]) + "\n")  # drop one tensor
        with pytest.raises(ValueError, match="tensors"):
            load_checkpoint(tmp_path / "m")
