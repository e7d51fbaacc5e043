from freqveil.pipeline.attack import run_threat_attack
from freqveil.pipeline.baselines import (
    blur_dataset,
    calibrate_blur_sigma,
    gaussian_blur,
    gaussian_kernel,
    train_joint_with_utility,
    train_tradeoff_baseline,
)
from freqveil.pipeline.core import (
    PipelineConfigError,
    PipelineInvariantError,
    PipelineState,
    ProtectedDataset,
    StageError,
    apply_band_enhancers,
    apply_compensation,
    apply_privacy,
    band_scale,
    map_frames,
    train_compensator,
    train_feature_compensator,
    train_privacy_enhancer_single,
    train_privacy_enhancers,
    train_utility,
)


def run_ablation(task_id, base_config, context=None):
    """Run one ablation variant; see :func:`freqveil.runner.run_ablation`."""
    from freqveil.runner import run_ablation as _run

    return _run(task_id, base_config, context)


__all__ = [
    "PipelineConfigError",
    "PipelineInvariantError",
    "PipelineState",
    "ProtectedDataset",
    "StageError",
    "apply_band_enhancers",
    "apply_compensation",
    "apply_privacy",
    "band_scale",
    "blur_dataset",
    "calibrate_blur_sigma",
    "gaussian_blur",
    "gaussian_kernel",
    "map_frames",
    "run_ablation",
    "run_threat_attack",
    "train_compensator",
    "train_feature_compensator",
    "train_joint_with_utility",
    "train_privacy_enhancer_single",
    "train_privacy_enhancers",
    "train_tradeoff_baseline",
    "train_utility",
]
