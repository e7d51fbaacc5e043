import json
from pathlib import Path

import numpy as np
import pytest

from freqveil.config import ExperimentConfig
from freqveil.metrics import PrivacyReport
from freqveil.models import param_digest
from freqveil.pipeline import run_ablation
from freqveil.runner import (
    persist_variant,
    prepare_context,
    run_variant_in_context,
)

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
    "variant_params": {"sigma": 1.0, "kernel_radius": 3, "lambda": 1.0,
                       "joint_warmup_epochs": 1},
    "seeds": {"global": 5},
}


@pytest.fixture(scope="module")
def micro():
    cfg = ExperimentConfig.from_dict(MICRO)
    return cfg, prepare_context(cfg)


ALL_VARIANTS = ["none", "full", "task1", "task2", "task3", "task4", "task5",
                "task6", "gaussian", "tradeoff"]


class TestVariants:
    @pytest.mark.parametrize("variant", ALL_VARIANTS)
    def test_every_variant_emits_complete_report(self, micro, variant):
        cfg, ctx = micro
        result = run_variant_in_context(cfg, ctx, variant)
        report = result.report
        assert isinstance(report, PrivacyReport)
        assert report.variant_id == variant
        assert 0.0 <= report.plr <= 1.0
        assert 0.0 <= report.utility_accuracy <= 1.0
        assert set(report.per_class_accuracy) == {"0", "1"}
        assert report.chance_level == pytest.approx(1 / 3)
        assert "plr_unprotected" in result.metrics["extras"]

    def test_frozen_handles_stable_across_full_run(self, micro):
        cfg, ctx = micro
        before = {
            "identity": param_digest(ctx.identity_classifier),
            "expression": param_digest(ctx.expression_classifier),
        }
        result = run_variant_in_context(cfg, ctx, "full")
        assert param_digest(ctx.identity_classifier) == before["identity"]
        assert param_digest(ctx.expression_classifier) == before["expression"]
        assert param_digest(result.handles["validator"]) == before["identity"]
        assert param_digest(result.handles["controller_high"]) == before["identity"]
        assert param_digest(result.handles["controller_low"]) == before["identity"]

    def test_full_emits_both_stages(self, micro):
        cfg, ctx = micro
        result = run_variant_in_context(cfg, ctx, "full")
        assert set(result.protected) == {"G", "C", "final"}
        g_train, g_test = result.protected["G"]
        c_train, c_test = result.protected["C"]
        assert g_train.stage == "G" and c_train.stage == "C"
        assert len(g_test) == len(ctx.test)
        assert result.metrics["extras"]["plr_stage_g"] <= 1.0

    def test_context_handles_not_mutated_by_variants(self, micro):
        cfg, ctx = micro
        before = param_digest(ctx.enhancer_low)
        run_variant_in_context(cfg, ctx, "full")
        run_variant_in_context(cfg, ctx, "task6")
        assert param_digest(ctx.enhancer_low) == before

    def test_gaussian_records_sigma(self, micro):
        cfg, ctx = micro
        result = run_variant_in_context(cfg, ctx, "gaussian")
        assert result.metrics["extras"]["sigma"] == 1.0


class TestRunAblation:
    def test_returns_report_for_each_task(self, micro):
        cfg, ctx = micro
        report = run_ablation(3, cfg, context=ctx)
        assert report.variant_id == "task3"

    def test_invalid_task_id(self, micro):
        cfg, ctx = micro
        with pytest.raises(ValueError, match="task_id"):
            run_ablation(9, cfg, context=ctx)


class TestPersistence:
    def test_run_directory_layout(self, micro, tmp_path):
        cfg, ctx = micro
        result = run_variant_in_context(cfg, ctx, "full")
        run_dir = persist_variant(result, cfg, tmp_path / "run")
        assert (run_dir / "config_snapshot.json").exists()
        assert (run_dir / "metrics.json").exists()
        assert (run_dir / "report.json").exists()
        assert (run_dir / "losses.csv").exists()
        for stage in ("G", "C", "final"):
            assert (run_dir / f"protected_{stage}" / "train" / "manifest.json").exists()
            assert (run_dir / f"protected_{stage}" / "test" / "manifest.json").exists()
        for name in result.handles:
            assert (run_dir / "checkpoints" / name / "meta.json").exists()
        losses = (run_dir / "losses.csv").read_text().splitlines()
        assert losses[0] == "stage,epoch,metric,value"
        assert len(losses) > 1

    def test_metrics_json_roundtrip(self, micro, tmp_path):
        cfg, ctx = micro
        result = run_variant_in_context(cfg, ctx, "none")
        run_dir = persist_variant(result, cfg, tmp_path / "run")
        saved = json.loads((run_dir / "metrics.json").read_text())
        assert saved == json.loads(json.dumps(result.metrics))
