import json
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from freqveil.datagen import VideoClip
from freqveil.metrics import (
    MetricError,
    PrivacyReport,
    ThreatReport,
    accuracy,
    assemble_report,
    privacy_leakage_ratio,
    psnr,
    report_rows_to_csv,
    report_rows_to_json,
    ssim,
)


class OracleValidator:
    """Predicts every clip's identity perfectly from a planted pixel code."""

    def __init__(self, num_classes):
        self.num_classes = num_classes

    def forward(self, frames):
        codes = np.round(frames[:, 0, 0, 0] * (self.num_classes - 1)).astype(int)
        return np.eye(self.num_classes)[codes]


class ConstantValidator:
    def __init__(self, num_classes, always=0):
        self.num_classes = num_classes
        self.always = always

    def forward(self, frames):
        logits = np.zeros((len(frames), self.num_classes))
        logits[:, self.always] = 1.0
        return logits


def coded_clips(k=10, per_identity=3, frames=4):
    clips = []
    for identity in range(k):
        for j in range(per_identity):
            arr = np.full((frames, 16, 16, 1), 0.5, dtype=np.float32)
            arr[:, 0, 0, 0] = identity / (k - 1)
            clips.append(VideoClip(arr, identity, j % 2,
                                   f"i{identity}_c{j}"))
    return clips


class TestPrivacyLeakageRatio:
    def test_oracle_validator_full_leakage(self):
        clips = coded_clips()
        plr, confusion = privacy_leakage_ratio(OracleValidator(10), clips, 0)
        assert plr == 1.0
        assert np.trace(confusion) == len(clips)

    def test_constant_validator_on_balanced_set_is_chance(self):
        clips = coded_clips(k=10, per_identity=2)
        plr, _ = privacy_leakage_ratio(ConstantValidator(10), clips, 0)
        assert plr == pytest.approx(0.10)

    def test_confusion_rows_are_per_identity_counts(self):
        clips = coded_clips(k=4, per_identity=5)
        _, confusion = privacy_leakage_ratio(ConstantValidator(4), clips, 0)
        assert confusion.shape == (4, 4)
        assert list(confusion.sum(axis=1)) == [5, 5, 5, 5]

    def test_frame_selection_deterministic(self):
        clips = coded_clips()
        a = privacy_leakage_ratio(OracleValidator(10), clips, frame_seed=5)
        b = privacy_leakage_ratio(OracleValidator(10), clips, frame_seed=5)
        assert a[0] == b[0]
        assert np.array_equal(a[1], b[1])

    def test_frame_level_variant(self):
        clips = coded_clips(k=3, per_identity=2, frames=6)
        plr, confusion = privacy_leakage_ratio(OracleValidator(3), clips, 0,
                                               frame_level=True)
        assert plr == 1.0
        assert confusion.sum() == 6 * 6

    def test_identity_out_of_range_rejected(self):
        clips = coded_clips(k=4)
        with pytest.raises(MetricError, match="identity label"):
            privacy_leakage_ratio(ConstantValidator(2), clips, 0)


class ExpressionOracle:
    def __init__(self, num_classes):
        self.num_classes = num_classes

    def forward(self, clips):
        codes = np.round(clips[:, 0, 0, 1, 0] * (self.num_classes - 1)).astype(int)
        return np.eye(self.num_classes)[codes]


class TestAccuracy:
    def make_clips(self, e=4, n_per=3):
        clips = []
        for expr in range(e):
            for j in range(n_per):
                arr = np.full((4, 16, 16, 1), 0.5, dtype=np.float32)
                arr[:, 0, 1, 0] = expr / (e - 1)
                clips.append(VideoClip(arr, 0, expr, f"e{expr}_c{j}"))
        # dataset-level invariants don't apply to raw clip lists
        return clips

    def test_perfect_classifier(self):
        clips = self.make_clips()
        acc, per_class = accuracy(ExpressionOracle(4), clips, "expression")
        assert acc == 1.0
        assert all(v == 1.0 for v in per_class.values())

    def test_absent_class_flagged_none(self):
        clips = self.make_clips(e=4)[0:6]  # only classes 0 and 1 present
        acc, per_class = accuracy(ExpressionOracle(4), clips, "expression")
        assert per_class["3"] is None
        assert per_class["0"] == 1.0

    def test_weighted_per_class_average_equals_overall(self):
        rng = np.random.default_rng(0)

        class NoisyOracle(ExpressionOracle):
            def forward(self, clips):
                logits = super().forward(clips)
                flip = rng.random(len(clips)) < 0.4
                logits[flip] = np.roll(logits[flip], 1, axis=1)
                return logits

        clips = self.make_clips(e=3, n_per=5)
        acc, per_class = accuracy(NoisyOracle(3), clips, "expression")
        counts = {str(c): sum(1 for cl in clips if cl.expression == c)
                  for c in range(3)}
        weighted = sum(per_class[c] * counts[c] for c in per_class) / len(clips)
        assert abs(weighted - acc) <= 1e-12


def naive_ssim(a, b, size=11, sigma=1.5):
    half = (size - 1) / 2.0
    coords = np.arange(size) - half
    g = np.exp(-(coords ** 2) / (2 * sigma ** 2))
    w = np.outer(g, g)
    w /= w.sum()
    c1, c2 = 0.01 ** 2, 0.03 ** 2
    h, wd = a.shape
    vals = []
    for i in range(h - size + 1):
        for j in range(wd - size + 1):
            pa = a[i:i + size, j:j + size]
            pb = b[i:i + size, j:j + size]
            mx, my = (w * pa).sum(), (w * pb).sum()
            vx = (w * pa * pa).sum() - mx * mx
            vy = (w * pb * pb).sum() - my * my
            cov = (w * pa * pb).sum() - mx * my
            vals.append(((2 * mx * my + c1) * (2 * cov + c2)) /
                        ((mx * mx + my * my + c1) * (vx + vy + c2)))
    return float(np.mean(vals))


class TestSsim:
    def test_identity_exactly_one(self):
        x = np.random.default_rng(0).random((16, 16))
        assert ssim(x, x) == 1.0

    def test_symmetry(self):
        rng = np.random.default_rng(1)
        a, b = rng.random((16, 16)), rng.random((16, 16))
        assert abs(ssim(a, b) - ssim(b, a)) <= 1e-12

    def test_checkerboard_inversion_strongly_negative(self):
        idx = np.indices((16, 16)).sum(axis=0)
        checker = (idx % 2).astype(np.float64)
        value = ssim(checker, 1.0 - checker)
        assert value < -0.9

    def test_matches_naive_reimplementation(self):
        rng = np.random.default_rng(2)
        a, b = rng.random((14, 15)), rng.random((14, 15))
        assert ssim(a, b) == pytest.approx(naive_ssim(a, b), abs=1e-9)

    def test_shape_mismatch(self):
        with pytest.raises(MetricError, match="shape"):
            ssim(np.zeros((16, 16)), np.zeros((16, 17)))

    def test_too_small_frame(self):
        with pytest.raises(MetricError, match="at least"):
            ssim(np.zeros((8, 8)), np.zeros((8, 8)))

    def test_multichannel_mean(self):
        rng = np.random.default_rng(3)
        a = rng.random((16, 16, 2))
        b = rng.random((16, 16, 2))
        per = (ssim(a[:, :, 0], b[:, :, 0]) + ssim(a[:, :, 1], b[:, :, 1])) / 2
        assert ssim(a, b) == pytest.approx(per, abs=1e-12)


class TestPsnr:
    def test_identical_is_infinite(self):
        x = np.random.default_rng(0).random((8, 8))
        assert psnr(x, x) == math.inf

    def test_mse_001_is_20db(self):
        a = np.zeros(100)
        b = np.full(100, 0.1)
        assert psnr(a, b) == pytest.approx(20.0, abs=1e-9)

    @given(st.floats(0.01, 0.2), st.floats(1.5, 4.0))
    @settings(max_examples=20, deadline=None)
    def test_larger_noise_strictly_decreases(self, amp, factor):
        rng = np.random.default_rng(7)
        x = rng.random((12, 12))
        noise = rng.uniform(-1, 1, size=x.shape)
        assert psnr(x, x + amp * factor * noise) < psnr(x, x + amp * noise)

    def test_shape_mismatch(self):
        with pytest.raises(MetricError, match="shape"):
            psnr(np.zeros(3), np.zeros(4))


def sample_report(variant="full", plr=0.1, acc=0.9, k=5):
    confusion = np.zeros((k, k), dtype=int)
    confusion[0, 0] = int(round(plr * 20))
    confusion[1, 0] = 20 - confusion[0, 0]
    return PrivacyReport(
        plr=float(np.trace(confusion) / confusion.sum()),
        utility_accuracy=acc,
        per_class_accuracy={"0": acc, "1": None},
        identity_confusion=confusion.tolist(),
        chance_level=1.0 / k, variant_id=variant, seed=3,
    )


class TestReports:
    def test_privacy_report_roundtrip_bit_exact(self):
        report = sample_report()
        text = report.to_json()
        assert PrivacyReport.from_json(text).to_json() == text

    def test_invariants_enforced(self):
        with pytest.raises(MetricError, match="trace"):
            PrivacyReport(plr=0.5, utility_accuracy=0.5,
                          per_class_accuracy={}, identity_confusion=[[1, 0], [0, 1]],
                          chance_level=0.5, variant_id="x", seed=0)
        with pytest.raises(MetricError, match="plr"):
            PrivacyReport(plr=1.5, utility_accuracy=0.5,
                          per_class_accuracy={}, identity_confusion=[[1]],
                          chance_level=1.0, variant_id="x", seed=0)

    def test_two_variant_table(self):
        rows = assemble_report([sample_report("full", 0.1),
                                sample_report("none", 1.0)])
        assert len(rows) == 2
        assert rows[0]["variant"] == "full"
        assert rows[0]["chance"] == 0.2
        assert rows[0]["SSIM"] is None

    def test_threat_rows_merge_by_variant(self):
        threat = ThreatReport(ssim=0.4, psnr=10.2, plr=0.06, method_id="full")
        rows = assemble_report([sample_report("full")], [threat])
        assert rows[0]["SSIM"] == 0.4
        assert rows[0]["PSNR"] == 10.2

    def test_csv_fixed_columns_and_blanks(self):
        text = report_rows_to_csv(assemble_report([sample_report("full")]))
        lines = text.strip().split("\n")
        assert lines[0] == "variant,PLR,ACC,SSIM,PSNR,chance"
        assert lines[1].split(",")[3] == ""

    def test_rows_json_roundtrip(self):
        rows = assemble_report([sample_report("full")])
        assert json.loads(report_rows_to_json(rows)) == rows


class TestRendererAgainstFullScaleReference:
    """Regression of the table renderer on the recorded full-scale
    reference numbers (not reproduced here; desk-scale runs have their own
    scales)."""

    REFERENCE = [
        {"variant": "no_preservation", "PLR": 1.0, "ACC": 0.87201},
        {"variant": "blur_leakage_matched", "PLR": 0.02150, "ACC": 0.20968},
        {"variant": "blur_utility_matched", "PLR": 0.88978, "ACC": 0.77778},
        {"variant": "adversarial_tradeoff", "PLR": 0.33020, "ACC": 0.71827},
        {"variant": "optical_flow", "PLR": 0.01030, "ACC": 0.16308},
        {"variant": "face_swap", "PLR": 0.03674, "ACC": 0.64964},
        {"variant": "frequency_controlled", "PLR": 0.02016, "ACC": 0.78843},
    ]

    def test_reference_rows_render(self):
        rows = [{"variant": r["variant"], "PLR": r["PLR"], "ACC": r["ACC"],
                 "SSIM": None, "PSNR": None, "chance": 1.0 / 91}
                for r in self.REFERENCE]
        text = report_rows_to_csv(rows)
        lines = text.strip().split("\n")
        assert len(lines) == 1 + len(self.REFERENCE)
        assert "frequency_controlled,0.02016,0.78843" in text
        best = min(self.REFERENCE[1:], key=lambda r: r["PLR"] - r["ACC"])
        assert best["variant"] == "frequency_controlled"
