import json
import subprocess
import sys
from pathlib import Path

import numpy as np
import pytest

from freqveil.config import ConfigError, ExperimentConfig, default_config

MICRO = {
    "data": {"synthesis": {"num_identities": 3, "num_expressions": 2,
                           "clips_per_pair": 3, "frames": 8, "height": 8,
                           "width": 8, "channels": 1, "noise_std": 0.01}},
    "models": {"classifier_width": 6, "enhancer_width": 6,
               "compensator_width": 6, "utility_width": 4,
               "utility_restarts": 1, "recovery_width": 6},
    "optim": {
        "pretrain_classifier": {"epochs": 25, "batch_size": 8},
        "pretrain_expression": {"epochs": 15, "batch_size": 8},
        "pretrain_enhancer": {"epochs": 2, "batch_size": 16},
        "identity_removal": {"epochs": 2, "batch_size": 8},
        "compensation": {"epochs": 2, "batch_size": 16},
        "utility": {"epochs": 3, "batch_size": 4},
        "attack": {"epochs": 2, "batch_size": 16},
        "joint": {"epochs": 3, "batch_size": 4},
    },
    "variant_params": {"joint_warmup_epochs": 1},
    "seeds": {"global": 5},
}


class TestConfig:
    def test_defaults_validate(self):
        cfg = ExperimentConfig.from_dict({})
        assert cfg.variant == "full"
        assert cfg.transform().family == "haar"

    def test_all_violations_listed_at_once(self):
        with pytest.raises(ConfigError) as err:
            ExperimentConfig.from_dict({
                "split": {"test_fraction": 2.0},
                "optim": {"utility": {"epochs": 0}},
                "variant": "bogus",
            })
        text = str(err.value)
        assert "test_fraction" in text
        assert "epochs" in text
        assert "variant" in text

    def test_unknown_keys_rejected(self):
        with pytest.raises(ConfigError, match="unknown config key"):
            ExperimentConfig.from_dict({"nonsense": 1})

    def test_seed_cascade(self):
        a = ExperimentConfig.from_dict({"seeds": {"global": 1}})
        b = ExperimentConfig.from_dict({"seeds": {"global": 2}})
        assert a.raw["seeds"]["shuffle"] != b.raw["seeds"]["shuffle"]
        assert a.raw["models"]["init_seed"] != b.raw["models"]["init_seed"]
        assert a.raw["data"]["synthesis"]["seed"] == 1

    def test_explicit_seed_pins_value(self):
        cfg = ExperimentConfig.from_dict({"seeds": {"global": 1, "frame": 77}})
        assert cfg.raw["seeds"]["frame"] == 77

    def test_snapshot_marks_non_explicit_defaults(self):
        cfg = ExperimentConfig.from_dict({"variant": "gaussian"})
        snap = cfg.snapshot()
        assert "variant" not in snap["non_paper_defaults"]
        assert "transform.family" in snap["non_paper_defaults"]
        assert snap["digest"] == cfg.digest()

    def test_snapshot_roundtrip_and_tamper_detection(self, tmp_path):
        cfg = ExperimentConfig.from_dict(MICRO)
        cfg.write_snapshot(tmp_path)
        back = ExperimentConfig.verify_snapshot(tmp_path)
        assert back.digest() == cfg.digest()
        snap_file = tmp_path / "config_snapshot.json"
        snap = json.loads(snap_file.read_text())
        snap["config"]["variant"] = "none"
        snap_file.write_text(json.dumps(snap))
        with pytest.raises(ConfigError, match="digest mismatch"):
            ExperimentConfig.verify_snapshot(tmp_path)

    def test_gaussian_variant_requires_sigma(self):
        with pytest.raises(ConfigError, match="sigma"):
            ExperimentConfig.from_dict({"variant": "gaussian",
                                        "variant_params": {"sigma": -1}})

    def test_default_config_has_no_mutation_leaks(self):
        a = default_config()
        a["models"]["classifier_width"] = 99
        assert default_config()["models"]["classifier_width"] != 99


def run_cli(*args):
    return subprocess.run(
        [sys.executable, "-m", "freqveil.cli", *args],
        capture_output=True, text=True,
    )


@pytest.fixture(scope="module")
def micro_config(tmp_path_factory):
    path = tmp_path_factory.mktemp("cfg") / "micro.json"
    path.write_text(json.dumps(MICRO))
    return path


class TestCli:
    def test_invalid_config_exits_2_listing_violations(self, tmp_path):
        bad = tmp_path / "bad.json"
        bad.write_text(json.dumps({"variant": "bogus",
                                   "split": {"test_fraction": 0}}))
        proc = run_cli("train", "--config", str(bad), "--out", str(tmp_path))
        assert proc.returncode == 2
        assert "variant" in proc.stderr
        assert "test_fraction" in proc.stderr

    def test_generate_writes_dataset(self, micro_config, tmp_path):
        proc = run_cli("generate", "--config", str(micro_config),
                       "--out", str(tmp_path))
        assert proc.returncode == 0, proc.stderr
        assert (tmp_path / "dataset" / "train" / "manifest.json").exists()
        assert (tmp_path / "config_snapshot.json").exists()

    def test_full_command_cycle(self, micro_config, tmp_path):
        out = tmp_path / "exp"
        proc = run_cli("train", "--config", str(micro_config),
                       "--out", str(out), "--variant", "none")
        assert proc.returncode == 0, proc.stderr
        run_dir = out / "runs" / "none"
        assert (run_dir / "metrics.json").exists()
        assert (run_dir / "losses.csv").exists()
        assert (run_dir / "report.json").exists()
        assert (run_dir / "checkpoints" / "validator" / "meta.json").exists()

        proc = run_cli("evaluate", str(run_dir))
        assert proc.returncode == 0, proc.stderr
        assert (run_dir / "report.csv").exists()
        header = (run_dir / "report.csv").read_text().splitlines()[0]
        assert header == "variant,PLR,ACC,SSIM,PSNR,chance"

        proc = run_cli("report", str(run_dir), "--out", str(out / "reports"))
        assert proc.returncode == 0, proc.stderr
        assert (out / "reports" / "comparison.csv").exists()

    def test_unprotected_run_leaks_everything(self, micro_config, tmp_path):
        out = tmp_path / "exp"
        proc = run_cli("train", "--config", str(micro_config),
                       "--out", str(out), "--variant", "none")
        assert proc.returncode == 0, proc.stderr
        metrics = json.loads((out / "runs" / "none" / "metrics.json").read_text())
        assert metrics["plr"] == 1.0

    def test_train_deterministic_metrics(self, micro_config, tmp_path):
        outs = []
        for name in ("a", "b"):
            out = tmp_path / name
            proc = run_cli("train", "--config", str(micro_config),
                           "--out", str(out), "--variant", "none")
            assert proc.returncode == 0, proc.stderr
            outs.append((out / "runs" / "none" / "metrics.json").read_bytes())
        assert outs[0] == outs[1]

    def test_evaluate_refuses_tampered_snapshot(self, micro_config, tmp_path):
        out = tmp_path / "exp"
        proc = run_cli("train", "--config", str(micro_config),
                       "--out", str(out), "--variant", "none")
        assert proc.returncode == 0, proc.stderr
        run_dir = out / "runs" / "none"
        snap_file = run_dir / "config_snapshot.json"
        snap = json.loads(snap_file.read_text())
        snap["config"]["seeds"]["global"] = 999
        snap_file.write_text(json.dumps(snap))
        proc = run_cli("evaluate", str(run_dir))
        assert proc.returncode == 2
        assert "digest mismatch" in proc.stderr

    def test_missing_artifact_named(self, micro_config, tmp_path):
        out = tmp_path / "exp"
        proc = run_cli("train", "--config", str(micro_config),
                       "--out", str(out), "--variant", "none")
        assert proc.returncode == 0, proc.stderr
        run_dir = out / "runs" / "none"
        import shutil
        shutil.rmtree(run_dir / "checkpoints" / "utility")
        proc = run_cli("evaluate", str(run_dir))
        assert proc.returncode == 3
        assert "utility" in proc.stderr

    def test_seed_override_changes_data(self, micro_config, tmp_path):
        from freqveil.datagen import load_dataset

        runs = []
        for seed, name in [(5, "a"), (6, "b")]:
            out = tmp_path / name
            proc = run_cli("train", "--config", str(micro_config),
                           "--out", str(out), "--variant", "none",
                           "--seed", str(seed))
            assert proc.returncode == 0, proc.stderr
            run_dir = out / "runs" / "none"
            metrics = json.loads((run_dir / "metrics.json").read_text())
            assert metrics["seed"] == seed
            runs.append(load_dataset(run_dir / "protected_final" / "test"))
        assert not np.array_equal(runs[0].clips[0].frames,
                                  runs[1].clips[0].frames)
