from freqveil.models.handles import (
    FrozenModelError,
    ModelHandle,
    ModelSpecError,
    freeze,
    load_model,
    make_reference_model,
    param_digest,
    save_model,
)
from freqveil.models.optim import OptimizerConfig, OptimizerConfigError
from freqveil.models.training import (
    TrainingError,
    classifier_accuracy,
    classifier_frames,
    pretrain_classifier,
    pretrain_enhancer,
    train_image_to_image,
)

__all__ = [
    "FrozenModelError",
    "ModelHandle",
    "ModelSpecError",
    "OptimizerConfig",
    "OptimizerConfigError",
    "TrainingError",
    "classifier_accuracy",
    "classifier_frames",
    "freeze",
    "load_model",
    "make_reference_model",
    "param_digest",
    "pretrain_classifier",
    "pretrain_enhancer",
    "save_model",
    "train_image_to_image",
]
