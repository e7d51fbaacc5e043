"""Pretraining routines for classifiers and image-to-image models."""

from __future__ import annotations

import warnings

import numpy as np

from freqveil.datagen import Dataset
from freqveil.models.handles import FrozenModelError, ModelHandle
from freqveil.models.layers import cross_entropy, l1_loss
from freqveil.models.optim import OptimizerConfig, make_stepper
from freqveil.rngs import stream

FRAME_POLICIES = ("all_frames", "one_random_frame_per_clip")


class TrainingError(ValueError):
    """Raised for role/label mismatches in a training call."""


def _check_trainable(model: ModelHandle) -> None:
    if model.frozen:
        raise FrozenModelError(
            f"refusing to train frozen {model.role} ({model.architecture_id})"
        )


def minibatches(n: int, batch_size: int, rng: np.random.Generator):
    order = rng.permutation(n)
    for start in range(0, n, batch_size):
        yield order[start:start + batch_size]


def classifier_frames(dataset: Dataset, label_field: str, frame_policy: str,
                      seed: int) -> tuple[np.ndarray, np.ndarray]:
    """Per-frame training pairs under the given frame policy."""
    if label_field not in ("identity", "expression"):
        raise TrainingError(f"label_field must be identity|expression, got {label_field!r}")
    if frame_policy not in FRAME_POLICIES:
        raise TrainingError(
            f"frame_policy must be one of {FRAME_POLICIES}, got {frame_policy!r}"
        )
    frames, labels = [], []
    for idx, clip in enumerate(dataset.clips):
        label = getattr(clip, label_field)
        if frame_policy == "all_frames":
            frames.append(clip.frames)
            labels.extend([label] * clip.frames.shape[0])
        else:
            t = int(stream(seed, "frame_pick", idx).integers(clip.frames.shape[0]))
            frames.append(clip.frames[t:t + 1])
            labels.append(label)
    return np.concatenate(frames, axis=0), np.array(labels, dtype=np.int64)


def classifier_accuracy(model: ModelHandle, frames: np.ndarray,
                        labels: np.ndarray, batch_size: int = 256) -> float:
    hits = 0
    for start in range(0, len(frames), batch_size):
        logits = model.forward(frames[start:start + batch_size])
        hits += int(np.sum(np.argmax(logits, axis=1) == labels[start:start + batch_size]))
    return hits / len(frames)


def pretrain_classifier(model: ModelHandle, dataset: Dataset, label_field: str,
                        frame_policy: str, opt: OptimizerConfig,
                        ) -> tuple[ModelHandle, dict]:
    """Cross-entropy training of a frame classifier; returns the trained
    handle and a per-epoch loss/accuracy trace."""
    _check_trainable(model)
    if model.role != "classifier":
        raise TrainingError(f"pretrain_classifier needs role=classifier, got {model.role}")
    expected = dataset.num_identities if label_field == "identity" else dataset.num_expressions
    if model.num_classes != expected:
        raise TrainingError(
            f"classifier has {model.num_classes} classes but dataset has "
            f"{expected} {label_field} labels"
        )
    frames, labels = classifier_frames(dataset, label_field, frame_policy, opt.seed)
    trace = {"loss": [], "accuracy": []}
    stepper = make_stepper(opt, model.n_params, model.params.dtype)
    for epoch in range(opt.epochs):
        rng = stream(opt.seed, "shuffle", epoch)
        losses = []
        for batch in minibatches(len(frames), opt.batch_size, rng):
            y = labels[batch]
            loss, grad, _ = model.forward_backward(
                frames[batch], lambda logits: cross_entropy(logits, y)
            )
            stepper.step(model.params, grad)
            losses.append(loss)
        trace["loss"].append(float(np.mean(losses)))
        trace["accuracy"].append(classifier_accuracy(model, frames, labels))
    return model, trace


def train_image_to_image(model: ModelHandle, inputs: np.ndarray,
                         targets: np.ndarray, opt: OptimizerConfig,
                         loss_pair=l1_loss) -> tuple[ModelHandle, dict]:
    """Generic paired image-to-image training (L1 by default)."""
    _check_trainable(model)
    if model.role not in ("enhancer", "compensator", "recovery"):
        raise TrainingError(
            f"image-to-image training needs an enhancer/compensator/recovery "
            f"role, got {model.role}"
        )
    inputs = np.asarray(inputs, dtype=model.params.dtype)
    targets = np.asarray(targets, dtype=model.params.dtype)
    if inputs.shape != targets.shape:
        raise TrainingError(
            f"input/target shapes differ: {inputs.shape} vs {targets.shape}"
        )
    if inputs.shape[1:] != tuple(model.architecture.input_shape):
        raise TrainingError(
            f"model expects items of shape {model.architecture.input_shape}, "
            f"got {inputs.shape[1:]}"
        )
    trace = {"loss": []}
    stepper = make_stepper(opt, model.n_params, model.params.dtype)
    for epoch in range(opt.epochs):
        rng = stream(opt.seed, "shuffle", epoch)
        losses = []
        for batch in minibatches(len(inputs), opt.batch_size, rng):
            t = targets[batch]
            loss, grad, _ = model.forward_backward(
                inputs[batch], lambda pred: loss_pair(pred, t)
            )
            stepper.step(model.params, grad)
            losses.append(loss)
        trace["loss"].append(float(np.mean(losses)))
    return model, trace


def pretrain_enhancer(model: ModelHandle, arrays: np.ndarray,
                      opt: OptimizerConfig,
                      mae_warn_threshold: float = 0.05) -> tuple[ModelHandle, dict]:
    """Pretrain an image-to-image model to reproduce its input under L1
    loss.  Warns if the final training loss stays above the threshold."""
    arrays = np.asarray(arrays)
    item_shape = tuple(model.architecture.input_shape)
    if arrays.shape[-len(item_shape):] != item_shape:
        raise TrainingError(
            f"arrays of shape {arrays.shape} do not stack into model items "
            f"of shape {item_shape}"
        )
    flat = arrays.reshape((-1,) + item_shape)
    model, trace = train_image_to_image(model, flat, flat, opt)
    if trace["loss"][-1] > mae_warn_threshold:
        warnings.warn(
            f"enhancer pretraining ended at L1 {trace['loss'][-1]:.4f} > "
            f"threshold {mae_warn_threshold}", RuntimeWarning
        )
    return model, trace
