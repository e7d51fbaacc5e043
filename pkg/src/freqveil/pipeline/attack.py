"""Recovery-attack harness: a white-box attacker trains an encoder-decoder
on (protected, original) training pairs with L1 loss and is scored by the
similarity of its recovered test frames to the originals and by how much
identity the frozen validator reads back out of them."""

from __future__ import annotations

import math
from dataclasses import replace

import numpy as np

from freqveil.metrics import ThreatReport, privacy_leakage_ratio, ssim
from freqveil.models import ModelHandle, OptimizerConfig, make_reference_model
from freqveil.models.training import train_image_to_image
from freqveil.pipeline.core import PipelineConfigError


def _aligned_clips(protected, original):
    by_id = {c.clip_id: c for c in original.clips}
    missing = [c.clip_id for c in protected.clips if c.clip_id not in by_id]
    if missing or len(by_id) != len(protected.clips):
        raise PipelineConfigError(
            f"protected/original sets are misaligned by clip_id "
            f"(missing: {missing[:5]}, protected {len(protected.clips)} vs "
            f"original {len(original.clips)})"
        )
    return [(c, by_id[c.clip_id]) for c in protected.clips]


def run_threat_attack(protected_train, original_train, protected_test,
                      original_test, validator: ModelHandle,
                      opt: OptimizerConfig, frame_seed: int = 0,
                      method_id: str = "protected",
                      recovery_width: int = 8, recovery_seed: int = 900
                      ) -> tuple[ThreatReport, ModelHandle, dict]:
    """Train the recovery model on the training pairs, then report
    SSIM/PSNR of recovered vs original test frames and the validator's
    leakage on the recovered clips."""
    train_pairs = _aligned_clips(protected_train, original_train)
    test_pairs = _aligned_clips(protected_test, original_test)

    inputs = np.concatenate([p.frames for p, _ in train_pairs], axis=0)
    targets = np.concatenate([o.frames for _, o in train_pairs], axis=0)
    h, w, c = inputs.shape[1:]
    recovery = make_reference_model(
        "recovery", {"height": h, "width": w, "channels": c,
                     "width_factor": recovery_width}, recovery_seed)
    recovery, trace = train_image_to_image(recovery, inputs, targets, opt)

    recovered_clips = []
    ssim_values = []
    sq_err_sum = 0.0
    count = 0
    for prot, orig in test_pairs:
        rec = np.clip(recovery.forward(prot.frames), 0.0, 1.0).astype(np.float32)
        recovered_clips.append(replace(prot, frames=rec))
        for t in range(rec.shape[0]):
            ssim_values.append(ssim(rec[t], orig.frames[t]))
        sq_err_sum += float(np.sum((rec.astype(np.float64) - orig.frames) ** 2))
        count += rec.size
    mean_ssim = float(np.mean(ssim_values))
    mse = sq_err_sum / count
    pooled_psnr = math.inf if mse == 0.0 else 10.0 * math.log10(1.0 / mse)
    plr, _ = privacy_leakage_ratio(validator, recovered_clips, frame_seed)
    report = ThreatReport(ssim=mean_ssim, psnr=float(pooled_psnr), plr=plr,
                          method_id=method_id)
    return report, recovery, trace
