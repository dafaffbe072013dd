import numpy as np
import pytest
from click.testing import CliRunner

from burstdiff.btsr import read_btsr
from burstdiff.cli import main
from burstdiff.config import (ExperimentConfig, config_hash, dump_config,
                              load_config, parse_config)


class TestConfig:
    def test_defaults_carry_provenance_tags(self):
        text = dump_config(ExperimentConfig())
        assert "tau = 40  # method-default" in text
        assert "sigma_max = 0.03  # method-default" in text
        assert "burst_size = 8  # protocol" in text
        for line in text.splitlines()[1:]:
            assert "#" in line, f"field line without provenance: {line}"

    def test_parse_round_trip(self):
        cfg = ExperimentConfig(tau=7, sigma_max=0.5, sampler="cm", warm_start=False)
        back = parse_config(dump_config(cfg))
        assert back.tau == 7
        assert back.sigma_max == 0.5
        assert back.sampler == "cm"
        assert back.warm_start is False

    def test_parse_rejects_unknown_key(self):
        with pytest.raises(ValueError, match="unknown key"):
            parse_config("nonsense = 1\n")

    def test_parse_rejects_malformed_line(self):
        with pytest.raises(ValueError, match="key = value"):
            parse_config("tau 40\n")

    def test_comments_and_blanks_ignored(self):
        cfg = parse_config("# a comment\n\ntau = 13  # inline\n")
        assert cfg.tau == 13

    def test_hash_stable_and_sensitive(self):
        a = ExperimentConfig()
        b = ExperimentConfig()
        assert config_hash(a) == config_hash(b)
        b.tau = 41
        assert config_hash(a) != config_hash(b)

    def test_env_seed_override(self, monkeypatch):
        monkeypatch.setenv("BDL_SEED", "777")
        cfg = parse_config("seed = 1\n")
        assert cfg.seed == 777

    def test_derived_max_translation(self):
        assert ExperimentConfig(hr_size=64).max_translation == pytest.approx(6.0)
        assert ExperimentConfig(hr_size=32).max_translation == pytest.approx(3.0)
        assert ExperimentConfig(hr_size=32, max_translation=2.0).max_translation == 2.0

    def test_sweep_values(self):
        cfg = ExperimentConfig()
        assert cfg.sweep_values("sigma_max") == [80, 0.2, 0.08, 0.05, 0.03, 0.01, 0.005]
        assert cfg.sweep_values("t_cm") == [1, 2, 3, 4, 5, 11]
        with pytest.raises(ValueError):
            cfg.sweep_values("bogus")

    def test_invalid_sampler_rejected(self):
        with pytest.raises(ValueError):
            ExperimentConfig(sampler="pixie")


@pytest.fixture(scope="module")
def tiny_dataset_dir(tmp_path_factory):
    """A 3-image dataset small enough for CLI smoke tests."""
    root = tmp_path_factory.mktemp("data")
    runner = CliRunner()
    cfg = root / "cfg.txt"
    cfg.write_text(
        "n_images = 3\nhr_size = 32\nscale_factor = 2\ntrain_steps = 8\n"
        "batch_size = 2\ndistill_iters = 6\ndistill_levels = 6\nseed = 3\n"
    )
    result = runner.invoke(main, ["simulate", "--config", str(cfg), "--out", str(root / "ds")])
    assert result.exit_code == 0, result.output
    return root


class TestCli:
    def test_simulate_layout(self, tiny_dataset_dir):
        ds = tiny_dataset_dir / "ds"
        assert sorted(p.name for p in (ds / "hr").glob("*.btsr")) == [
            "0000.btsr", "0001.btsr", "0002.btsr"]
        assert (ds / "burst" / "0000_f0.btsr").exists()
        assert (ds / "burst" / "0000_f7.btsr").exists()
        assert (ds / "meta" / "0002.txt").exists()
        hr = read_btsr(ds / "hr" / "0000.btsr")
        assert hr.shape == (3, 32, 32)

    def test_baseline_outputs(self, tiny_dataset_dir):
        runner = CliRunner()
        cfg = tiny_dataset_dir / "cfg.txt"
        ds = tiny_dataset_dir / "ds"
        result = runner.invoke(main, ["baseline", "--config", str(cfg), "--data", str(ds)])
        assert result.exit_code == 0, result.output
        init = read_btsr(ds / "init" / "0000.btsr")
        assert init.shape == (3, 32, 32)
        assert (ds / "init" / "0000.png").exists()

    def test_train_distill_sample_bench_chain(self, tiny_dataset_dir, tmp_path):
        runner = CliRunner()
        cfg_path = tiny_dataset_dir / "cfg.txt"
        ds = tiny_dataset_dir / "ds"
        teacher = tmp_path / "teacher"
        student = tmp_path / "student"

        result = runner.invoke(main, ["train", "--config", str(cfg_path),
                                      "--data", str(ds), "--out", str(teacher)])
        assert result.exit_code == 0, result.output
        assert (teacher / "manifest.txt").exists()

        result = runner.invoke(main, ["distill", "--config", str(cfg_path),
                                      "--data", str(ds), "--teacher", str(teacher),
                                      "--out", str(student), "--init-mode", "init-sr"])
        assert result.exit_code == 0, result.output
        assert (student / "manifest.txt").exists()

        full_cfg = tmp_path / "full.txt"
        full_cfg.write_text(cfg_path.read_text()
                            + f"ckpt_teacher = {teacher}\nckpt_student = {student}\n")
        out_dir = tmp_path / "samples"
        base = ["--config", str(full_cfg), "--data", str(ds), "--out", str(out_dir)]
        result = runner.invoke(main, ["sample", *base, "--sampler", "cm", "--tcm", "2",
                                      "--sigma-max", "0.03", "--seed", "5"])
        assert result.exit_code == 0, result.output
        assert (out_dir / "sr_0000.btsr").exists()
        assert (out_dir / "sr_0000.png").exists()
        trace = (out_dir / "trace_0000.csv").read_text().strip().split("\n")
        assert trace[0] == "step,sigma,calls,ms"
        assert len(trace) == 3  # two refinement rounds

        sr = read_btsr(out_dir / "sr_0000.btsr")
        assert sr.shape == (3, 32, 32)
        assert sr.min() >= 0.0 and sr.max() <= 1.0

    def test_sample_edm_flags(self, tiny_dataset_dir, tmp_path):
        runner = CliRunner()
        cfg_path = tiny_dataset_dir / "cfg.txt"
        ds = tiny_dataset_dir / "ds"
        teacher = tmp_path / "teacher2"
        result = runner.invoke(main, ["train", "--config", str(cfg_path),
                                      "--data", str(ds), "--out", str(teacher), "--steps", "5"])
        assert result.exit_code == 0, result.output
        out_dir = tmp_path / "edm_out"
        cfg2 = tmp_path / "cfg2.txt"
        cfg2.write_text((cfg_path.read_text()) + f"ckpt_teacher = {teacher}\n")
        result = runner.invoke(main, ["sample", "--config", str(cfg2), "--data", str(ds),
                                      "--out", str(out_dir), "--sampler", "edm",
                                      "--tau", "3", "--sigma-max", "0.05",
                                      "--churn", "0.1", "--seed", "2"])
        assert result.exit_code == 0, result.output
        trace = (out_dir / "trace_0000.csv").read_text().strip().split("\n")
        assert len(trace) == 4  # header + 3 steps

    def test_config_dump_command(self):
        runner = CliRunner()
        result = runner.invoke(main, ["config", "dump"])
        assert result.exit_code == 0
        assert "tau = 40  # method-default" in result.output
        assert "config_hash" in result.output
