"""Frequency-split identity removal for labelled video clips.

The package trains small privacy enhancers against frozen identity
classifiers on wavelet coefficients, compensates expression features under
a frozen expression classifier, and audits residual identity leakage with
a leakage-ratio metric and a recovery-attack harness.  Everything runs at
desk scale on a synthetic factor-controlled dataset.
"""

from freqveil.datagen import (
    Dataset,
    SynthesisSpec,
    VideoClip,
    generate_synthetic,
    ingest_directory,
    load_dataset,
    save_dataset,
    split_dataset,
)
from freqveil.frequency import (
    FrequencyPair,
    TransformConfig,
    decompose,
    energy_split,
    reconstruct,
)
from freqveil.metrics import (
    PrivacyReport,
    ThreatReport,
    accuracy,
    assemble_report,
    privacy_leakage_ratio,
    psnr,
    ssim,
)
from freqveil.models import (
    ModelHandle,
    OptimizerConfig,
    freeze,
    load_model,
    make_reference_model,
    param_digest,
    pretrain_classifier,
    pretrain_enhancer,
    save_model,
)
from freqveil.pipeline import (
    PipelineState,
    ProtectedDataset,
    gaussian_blur,
    run_ablation,
    run_threat_attack,
    train_feature_compensator,
    train_privacy_enhancers,
    train_tradeoff_baseline,
    train_utility,
)

__version__ = "0.1.0"

__all__ = [
    "Dataset",
    "FrequencyPair",
    "ModelHandle",
    "OptimizerConfig",
    "PipelineState",
    "PrivacyReport",
    "ProtectedDataset",
    "SynthesisSpec",
    "ThreatReport",
    "TransformConfig",
    "VideoClip",
    "accuracy",
    "assemble_report",
    "decompose",
    "energy_split",
    "freeze",
    "gaussian_blur",
    "generate_synthetic",
    "ingest_directory",
    "load_dataset",
    "load_model",
    "make_reference_model",
    "param_digest",
    "pretrain_classifier",
    "pretrain_enhancer",
    "privacy_leakage_ratio",
    "psnr",
    "reconstruct",
    "run_ablation",
    "run_threat_attack",
    "save_dataset",
    "save_model",
    "split_dataset",
    "ssim",
    "train_feature_compensator",
    "train_privacy_enhancers",
    "train_tradeoff_baseline",
    "train_utility",
]
