import numpy as np
import pytest

from freqveil.datagen import SynthesisSpec, generate_synthetic, split_dataset
from freqveil.models import (
    FrozenModelError,
    ModelSpecError,
    OptimizerConfig,
    OptimizerConfigError,
    TrainingError,
    classifier_accuracy,
    classifier_frames,
    freeze,
    load_model,
    make_reference_model,
    param_digest,
    pretrain_classifier,
    pretrain_enhancer,
    save_model,
)

FRAME = {"height": 8, "width": 8, "channels": 1}


def tiny_dataset(**kw):
    base = dict(num_identities=3, num_expressions=2, clips_per_pair=3,
                frames=8, height=8, width=8, channels=1, seed=21,
                noise_std=0.0)
    base.update(kw)
    return generate_synthetic(SynthesisSpec(**base))


class TestMakeReferenceModel:
    def test_classifier_logit_length(self):
        clf = make_reference_model(
            "classifier", {"height": 32, "width": 32, "channels": 1,
                           "num_classes": 10}, 3)
        frame = np.zeros((32, 32, 1), dtype=np.float32)
        assert clf.forward(frame).shape == (10,)
        assert clf.forward(np.zeros((5, 32, 32, 1), dtype=np.float32)).shape == (5, 10)

    def test_enhancer_preserves_coefficient_shape(self):
        enh = make_reference_model(
            "enhancer", {"height": 32, "width": 32, "channels": 1}, 3)
        coeffs = np.zeros((8, 32, 32, 1), dtype=np.float32)
        assert enh.forward(coeffs).shape == coeffs.shape

    def test_same_seed_identical_parameters(self):
        a = make_reference_model("classifier", {**FRAME, "num_classes": 4}, 7)
        b = make_reference_model("classifier", {**FRAME, "num_classes": 4}, 7)
        assert np.array_equal(a.params, b.params)
        assert param_digest(a) == param_digest(b)

    def test_different_seed_differs(self):
        a = make_reference_model("classifier", {**FRAME, "num_classes": 4}, 7)
        b = make_reference_model("classifier", {**FRAME, "num_classes": 4}, 8)
        assert not np.array_equal(a.params, b.params)

    def test_inconsistent_spec_rejected(self):
        with pytest.raises(ModelSpecError, match="num_classes"):
            make_reference_model("classifier", FRAME, 1)
        with pytest.raises(ModelSpecError, match="does not take"):
            make_reference_model("enhancer", {**FRAME, "num_classes": 3}, 1)
        with pytest.raises(ModelSpecError, match="frames"):
            make_reference_model("utility", {**FRAME, "num_classes": 3}, 1)
        with pytest.raises(ModelSpecError, match="unknown role"):
            make_reference_model("oracle", FRAME, 1)

    def test_utility_consumes_whole_clip(self):
        util = make_reference_model(
            "utility", {"frames": 8, **FRAME, "num_classes": 2}, 5)
        clip = np.zeros((8, 8, 8, 1), dtype=np.float32)
        assert util.forward(clip).shape == (2,)


class TestFreezeAndDigest:
    def test_freeze_sets_flags(self):
        clf = make_reference_model("classifier", {**FRAME, "num_classes": 2}, 2)
        freeze(clf)
        assert clf.frozen
        assert clf.mode == "eval"

    def test_training_refuses_frozen_handle(self):
        clf = freeze(make_reference_model("classifier",
                                          {**FRAME, "num_classes": 3}, 2))
        with pytest.raises(FrozenModelError):
            pretrain_classifier(clf, tiny_dataset(), "identity", "all_frames",
                                OptimizerConfig(epochs=1))

    def test_digest_changes_after_step(self):
        ds = tiny_dataset()
        clf = make_reference_model("classifier", {**FRAME, "num_classes": 3}, 2)
        before = param_digest(clf)
        pretrain_classifier(clf, ds, "identity", "all_frames",
                            OptimizerConfig(epochs=1, batch_size=8, seed=0))
        assert param_digest(clf) != before

    def test_digest_stable_across_save_load(self, tmp_path):
        clf = make_reference_model("classifier", {**FRAME, "num_classes": 3}, 2)
        digest = param_digest(clf)
        save_model(clf, tmp_path / "m")
        assert param_digest(load_model(tmp_path / "m")) == digest

    def test_eval_forward_bitwise_deterministic(self):
        enh = make_reference_model("enhancer", FRAME, 4)
        freeze(enh)
        x = np.random.default_rng(0).random((4, 8, 8, 1)).astype(np.float32)
        assert np.array_equal(enh.forward(x), enh.forward(x))


class TestSerialization:
    def test_roundtrip_restores_state(self, tmp_path):
        util = make_reference_model(
            "utility", {"frames": 8, **FRAME, "num_classes": 2}, 5)
        freeze(util)
        save_model(util, tmp_path / "u")
        back = load_model(tmp_path / "u")
        assert back.frozen
        assert back.mode == "eval"
        assert back.role == "utility"
        assert back.architecture_id == util.architecture_id
        assert np.array_equal(back.params, util.params)

    def test_tampered_checkpoint_rejected(self, tmp_path):
        clf = make_reference_model("classifier", {**FRAME, "num_classes": 2}, 1)
        save_model(clf, tmp_path / "m")
        target = next((tmp_path / "m").glob("p000*.arr"))
        data = bytearray(target.read_bytes())
        data[-1] ^= 0xFF
        target.write_bytes(bytes(data))
        with pytest.raises(ModelSpecError, match="digest"):
            load_model(tmp_path / "m")


class TestPretrainClassifier:
    def test_identity_reaches_perfect_on_noise_free_data(self):
        ds = tiny_dataset()
        clf = make_reference_model("classifier", {**FRAME, "num_classes": 3}, 9)
        clf, trace = pretrain_classifier(
            clf, ds, "identity", "all_frames",
            OptimizerConfig(learning_rate=0.03, epochs=10, batch_size=16, seed=1))
        assert trace["accuracy"][-1] == 1.0

    def test_expression_above_chance_on_held_out_clips(self):
        ds = generate_synthetic(SynthesisSpec(
            num_identities=4, num_expressions=2, clips_per_pair=6, frames=8,
            height=8, width=8, channels=1, seed=33))
        train, test = split_dataset(ds, 0.25, seed=2)
        clf = make_reference_model("classifier", {**FRAME, "num_classes": 2}, 9)
        clf, _ = pretrain_classifier(
            clf, train, "expression", "one_random_frame_per_clip",
            OptimizerConfig(learning_rate=0.03, epochs=40, batch_size=8, seed=1))
        frames, labels = classifier_frames(test, "expression",
                                           "one_random_frame_per_clip", 77)
        assert classifier_accuracy(clf, frames, labels) > 0.5

    def test_zero_epochs_rejected(self):
        with pytest.raises(OptimizerConfigError, match="epochs"):
            OptimizerConfig(epochs=0)

    def test_class_count_mismatch(self):
        ds = tiny_dataset()
        clf = make_reference_model("classifier", {**FRAME, "num_classes": 7}, 1)
        with pytest.raises(TrainingError, match="classes"):
            pretrain_classifier(clf, ds, "identity", "all_frames",
                                OptimizerConfig(epochs=1))

    def test_wrong_role_rejected(self):
        enh = make_reference_model("enhancer", FRAME, 1)
        with pytest.raises(TrainingError, match="role"):
            pretrain_classifier(enh, tiny_dataset(), "identity", "all_frames",
                                OptimizerConfig(epochs=1))

    def test_deterministic_given_seeds(self):
        ds = tiny_dataset()
        results = []
        for _ in range(2):
            clf = make_reference_model("classifier", {**FRAME, "num_classes": 3}, 4)
            clf, _ = pretrain_classifier(
                clf, ds, "identity", "all_frames",
                OptimizerConfig(epochs=2, batch_size=8, seed=11))
            results.append(param_digest(clf))
        assert results[0] == results[1]


class TestPretrainEnhancer:
    def test_reconstruction_error_below_threshold(self):
        # realistic inputs: frames of a synthetic dataset
        ds = tiny_dataset(noise_std=0.02, clips_per_pair=6)
        frames = np.concatenate([c.frames for c in ds.clips], axis=0)
        arrays, held_out = frames[:200], frames[200:250]
        enh = make_reference_model("enhancer", FRAME, 6)
        enh, trace = pretrain_enhancer(
            enh, arrays, OptimizerConfig(epochs=3, batch_size=16, seed=2))
        assert trace["loss"][-1] < 0.05
        out = enh.forward(held_out)
        assert float(np.mean(np.abs(out - held_out))) < 0.05

    def test_untrained_model_no_nan_on_zero_input(self):
        enh = make_reference_model("enhancer", FRAME, 6)
        out = enh.forward(np.zeros((4, 8, 8, 1), dtype=np.float32))
        assert np.all(np.isfinite(out))
        assert float(np.mean(np.abs(out))) >= 0.0

    def test_warns_when_threshold_not_met(self):
        rng = np.random.default_rng(3)
        arrays = rng.random((16, 8, 8, 1)).astype(np.float32)
        enh = make_reference_model("enhancer", FRAME, 6)
        with pytest.warns(RuntimeWarning, match="pretraining"):
            pretrain_enhancer(enh, arrays,
                              OptimizerConfig(epochs=1, batch_size=16, seed=2),
                              mae_warn_threshold=1e-9)

    def test_identical_seeds_identical_parameters(self):
        rng = np.random.default_rng(3)
        arrays = rng.random((32, 8, 8, 1)).astype(np.float32)
        digests = []
        for _ in range(2):
            enh = make_reference_model("enhancer", FRAME, 6)
            enh, _ = pretrain_enhancer(
                enh, arrays, OptimizerConfig(epochs=2, batch_size=8, seed=5))
            digests.append(param_digest(enh))
        assert digests[0] == digests[1]

    def test_shape_mismatch_rejected(self):
        enh = make_reference_model("enhancer", FRAME, 6)
        with pytest.raises(TrainingError, match="shape"):
            pretrain_enhancer(enh, np.zeros((4, 6, 6, 1), dtype=np.float32),
                              OptimizerConfig(epochs=1))
