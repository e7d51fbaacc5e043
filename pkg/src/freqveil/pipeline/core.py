"""Core training procedures: adversarial identity removal on frequency
bands against frozen controllers, and expression-feature compensation
under a frozen expression classifier.

Identity removal maximizes the frozen controllers' cross-entropy (gradient
descent on its negation, with a loss cap as divergence guard; a
uniform-target mode is available as a bounded alternative).  Controllers
read the mid slice of their band, rescaled by 2^(-level/2) so coefficient
values land in the [0, 1] range the classifiers were pretrained on.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace

import numpy as np

from freqveil.datagen import Dataset, VideoClip
from freqveil.frequency import FrequencyPair, TransformConfig, decompose, reconstruct
from freqveil.models import ModelHandle, OptimizerConfig, param_digest
from freqveil.models.layers import cross_entropy, uniform_target_cross_entropy
from freqveil.models.optim import make_stepper
from freqveil.models.training import minibatches
from freqveil.rngs import stream

ASCENT_MODES = ("negated_ce", "uniform_target")


class PipelineInvariantError(RuntimeError):
    """Raised when a frozen handle changes or a state invariant fails."""


class PipelineConfigError(ValueError):
    """Raised for pipeline inputs the procedures cannot run on."""


class StageError(ValueError):
    """Raised when a protected dataset has the wrong stage."""


@dataclass
class ProtectedDataset:
    """Clips emitted by a protection stage; labels and ids match the source."""

    clips: list[VideoClip]
    stage: str
    num_identities: int
    num_expressions: int

    def __post_init__(self) -> None:
        if self.stage not in ("G", "C"):
            raise StageError(f"stage must be 'G' or 'C', got {self.stage!r}")

    def __len__(self) -> int:
        return len(self.clips)

    def frames_array(self) -> np.ndarray:
        return np.stack([c.frames for c in self.clips])

    def identities(self) -> np.ndarray:
        return np.array([c.identity for c in self.clips], dtype=np.int64)

    def expressions(self) -> np.ndarray:
        return np.array([c.expression for c in self.clips], dtype=np.int64)

    def verify_against(self, source: Dataset) -> None:
        if len(self.clips) != len(source.clips):
            raise PipelineInvariantError("protected set lost or gained clips")
        for mine, orig in zip(self.clips, source.clips):
            if (mine.clip_id != orig.clip_id or mine.identity != orig.identity
                    or mine.expression != orig.expression):
                raise PipelineInvariantError(
                    f"protected clip {mine.clip_id} does not match its source"
                )

    def to_dataset(self) -> Dataset:
        return Dataset(list(self.clips), self.num_identities,
                       self.num_expressions, provenance="protected")


@dataclass
class PipelineState:
    enhancer_high: ModelHandle
    enhancer_low: ModelHandle
    controller_high: ModelHandle
    controller_low: ModelHandle
    compensator: ModelHandle
    compensator_controller: ModelHandle
    validator: ModelHandle
    utility: ModelHandle
    transform: TransformConfig

    def __post_init__(self) -> None:
        for name in ("controller_high", "controller_low",
                     "compensator_controller", "validator"):
            handle = getattr(self, name)
            if not handle.frozen:
                raise PipelineInvariantError(f"{name} must be frozen")
        ids = {self.controller_high.architecture_id,
               self.controller_low.architecture_id,
               self.validator.architecture_id}
        if len(ids) != 1:
            raise PipelineInvariantError(
                f"identity controllers and validator must share an "
                f"architecture, got {sorted(ids)}"
            )
        digests = {param_digest(self.controller_high),
                   param_digest(self.controller_low),
                   param_digest(self.validator)}
        if len(digests) != 1:
            raise PipelineInvariantError(
                "identity controllers and validator must share pretrained "
                "parameters (their digests differ)"
            )

    def frozen_handles(self) -> dict[str, ModelHandle]:
        return {
            "controller_high": self.controller_high,
            "controller_low": self.controller_low,
            "compensator_controller": self.compensator_controller,
            "validator": self.validator,
        }


def _snapshot_digests(handles: dict[str, ModelHandle]) -> dict[str, str]:
    return {name: param_digest(h) for name, h in handles.items()}


def _assert_digests(handles: dict[str, ModelHandle],
                    before: dict[str, str], op_name: str) -> None:
    for name, h in handles.items():
        if param_digest(h) != before[name]:
            raise PipelineInvariantError(
                f"{op_name} modified frozen handle {name}"
            )


def band_scale(level: int) -> float:
    """Rescale factor aligning level-k coefficients with frame range."""
    return 2.0 ** (-level / 2.0)


def controller_band_view(band: np.ndarray, level: int,
                         is_detail: bool) -> np.ndarray:
    """Present a coefficient slice to a frame-pretrained classifier.

    Approximation coefficients rescale into [0, 1]; detail coefficients are
    zero-centred, so they are additionally shifted to mid-gray.
    """
    out = band * band_scale(level)
    if is_detail:
        out = out + 0.5
    return out


def _temporal_bands(clip_frames: np.ndarray, config: TransformConfig
                    ) -> FrequencyPair:
    if config.axis != "temporal":
        raise PipelineConfigError(
            "the protection pipeline operates on temporal-axis transforms; "
            f"got axis={config.axis!r}"
        )
    return decompose(clip_frames, config)


def decompose_dataset(dataset, config: TransformConfig
                      ) -> tuple[list[FrequencyPair], np.ndarray, np.ndarray]:
    """Decompose every clip once; returns pairs plus stacked mid slices of
    the low band and the first detail band."""
    pairs = [_temporal_bands(c.frames, config) for c in dataset.clips]
    low_mid = np.stack([p.low[p.low.shape[0] // 2] for p in pairs])
    first_high = [p.high[0] for p in pairs]
    high_mid = np.stack([h[h.shape[0] // 2] for h in first_high])
    return pairs, low_mid, high_mid


def _ascent_training(branches: list[dict], identities: np.ndarray,
                     opt: OptimizerConfig, loss_cap: float,
                     ascent_mode: str) -> dict:
    """Shared loop: update each branch's enhancer so its frozen controller
    loses the identity.  A branch whose controller cross-entropy exceeds
    loss_cap stops updating for the rest of the epoch."""
    if ascent_mode not in ASCENT_MODES:
        raise PipelineConfigError(
            f"ascent_mode must be one of {ASCENT_MODES}, got {ascent_mode!r}"
        )
    for br in branches:
        if br["enhancer"].frozen:
            raise PipelineInvariantError(
                f"enhancer for branch {br['name']} is frozen"
            )
        if not br["controller"].frozen:
            raise PipelineInvariantError(
                f"controller for branch {br['name']} is not frozen"
            )
        br["stepper"] = make_stepper(opt, br["enhancer"].n_params,
                                     br["enhancer"].params.dtype)
    def branch_eval(br):
        logits = br["controller"].forward(
            br["enhancer"].forward(br["inputs"]) * br["inv_scale"] + br["offset"]
        )
        ce, _ = cross_entropy(logits, identities)
        acc = float(np.mean(np.argmax(logits, axis=1) == identities))
        return ce, acc

    n = len(identities)
    trace: dict = {"epochs": [], "cap_events": [], "initial": {}}
    for br in branches:
        ce0, acc0 = branch_eval(br)
        trace["initial"][f"ce_{br['name']}"] = ce0
        trace["initial"][f"controller_accuracy_{br['name']}"] = acc0
    for epoch in range(opt.epochs):
        rng = stream(opt.seed, "ascent_shuffle", epoch)
        active = {br["name"]: True for br in branches}
        sums = {br["name"]: [] for br in branches}
        for batch in minibatches(n, opt.batch_size, rng):
            labels = identities[batch]
            for br in branches:
                if not active[br["name"]]:
                    continue
                controller, inv = br["controller"], br["inv_scale"]
                offset = br["offset"]
                raw_ce = {}

                def loss_fn(pred, controller=controller, inv=inv,
                            offset=offset, labels=labels, raw_ce=raw_ce):
                    scaled = pred * inv + offset
                    if ascent_mode == "negated_ce":
                        ce, _, dx = controller.forward_backward(
                            scaled, lambda lg: cross_entropy(lg, labels)
                        )
                        raw_ce["value"] = ce
                        return -ce, -dx * inv
                    ce, _, dx = controller.forward_backward(
                        scaled, lambda lg: uniform_target_cross_entropy(lg)
                    )
                    true_ce, _ = cross_entropy(
                        controller.forward(scaled), labels
                    )
                    raw_ce["value"] = true_ce
                    return ce, dx * inv

                _, grad, _ = br["enhancer"].forward_backward(
                    br["inputs"][batch], loss_fn
                )
                sums[br["name"]].append(raw_ce["value"])
                if raw_ce["value"] > loss_cap:
                    active[br["name"]] = False
                    trace["cap_events"].append(
                        {"epoch": epoch, "branch": br["name"],
                         "cross_entropy": raw_ce["value"]}
                    )
                    continue
                br["stepper"].step(br["enhancer"].params, grad)
            if not any(active.values()):
                break
        epoch_row = {"epoch": epoch}
        for br in branches:
            name = br["name"]
            epoch_row[f"ce_{name}"] = float(np.mean(sums[name])) if sums[name] else None
            _, acc = branch_eval(br)
            epoch_row[f"controller_accuracy_{name}"] = acc
        trace["epochs"].append(epoch_row)
    return trace


def train_privacy_enhancers(state: PipelineState, dataset: Dataset,
                            opt: OptimizerConfig, loss_cap: float = 16.0,
                            ascent_mode: str = "negated_ce"
                            ) -> tuple[PipelineState, ProtectedDataset, dict]:
    """Two-stream identity removal on wavelet bands (frozen controllers,
    enhancer-only updates), then emission of the protected dataset."""
    frozen = state.frozen_handles()
    before = _snapshot_digests(frozen)
    _, low_mid, high_mid = decompose_dataset(dataset, state.transform)
    identities = dataset.identities()
    branches = [
        {"name": "high", "enhancer": state.enhancer_high,
         "controller": state.controller_high, "inputs": high_mid,
         "inv_scale": band_scale(1), "offset": 0.5},
        {"name": "low", "enhancer": state.enhancer_low,
         "controller": state.controller_low, "inputs": low_mid,
         "inv_scale": band_scale(state.transform.levels), "offset": 0.0},
    ]
    trace = _ascent_training(branches, identities, opt, loss_cap, ascent_mode)
    protected = apply_privacy(state, dataset)
    _assert_digests(frozen, before, "train_privacy_enhancers")
    return state, protected, trace


def apply_band_enhancers(enhancer_low: ModelHandle, enhancer_high: ModelHandle,
                         transform: TransformConfig, dataset) -> ProtectedDataset:
    """Run band enhancers over every clip and invert the transform; output
    clips are clamped to [0, 1]."""
    clips = []
    for clip in dataset.clips:
        pair = _temporal_bands(clip.frames, transform)
        pair.low = enhancer_low.forward(pair.low)
        pair.high = [enhancer_high.forward(band) for band in pair.high]
        recon = np.clip(reconstruct(pair), 0.0, 1.0).astype(np.float32)
        clips.append(replace(clip, frames=recon))
    protected = ProtectedDataset(clips, "G", dataset.num_identities,
                                 dataset.num_expressions)
    protected.verify_against(dataset)
    return protected


def apply_privacy(state: PipelineState, dataset) -> ProtectedDataset:
    return apply_band_enhancers(state.enhancer_low, state.enhancer_high,
                                state.transform, dataset)


def train_privacy_enhancer_single(enhancer: ModelHandle,
                                  controller: ModelHandle, dataset: Dataset,
                                  opt: OptimizerConfig, loss_cap: float = 16.0,
                                  ascent_mode: str = "negated_ce"
                                  ) -> tuple[ProtectedDataset, dict]:
    """Transform-free variant: one enhancer works directly on frames (the
    controller reads the mid frame of each clip)."""
    X = np.stack([c.frames[c.frames.shape[0] // 2] for c in dataset.clips])
    branches = [{"name": "frames", "enhancer": enhancer,
                 "controller": controller, "inputs": X, "inv_scale": 1.0,
                 "offset": 0.0}]
    before = {"controller": param_digest(controller)}
    trace = _ascent_training(branches, dataset.identities(), opt, loss_cap,
                             ascent_mode)
    _assert_digests({"controller": controller}, before,
                    "train_privacy_enhancer_single")
    protected = map_frames(enhancer, dataset, stage="G")
    return protected, trace


def map_frames(model: ModelHandle, dataset, stage: str) -> ProtectedDataset:
    """Apply a per-frame image-to-image model to every clip."""
    clips = []
    for clip in dataset.clips:
        out = np.clip(model.forward(clip.frames), 0.0, 1.0).astype(np.float32)
        clips.append(replace(clip, frames=out))
    protected = ProtectedDataset(clips, stage, dataset.num_identities,
                                 dataset.num_expressions)
    protected.verify_against(dataset)
    return protected


def train_compensator(compensator: ModelHandle, controller: ModelHandle,
                      protected_g: ProtectedDataset, opt: OptimizerConfig
                      ) -> tuple[ProtectedDataset, dict]:
    """Compensation engine shared by the full pipeline and its variants."""
    if protected_g.stage != "G":
        raise StageError(
            f"feature compensation expects a stage-G input, got stage "
            f"{protected_g.stage!r}"
        )
    if compensator.frozen:
        raise PipelineInvariantError("compensator is frozen")
    if not controller.frozen:
        raise PipelineInvariantError("compensation controller is not frozen")

    frames = np.concatenate([c.frames for c in protected_g.clips], axis=0)
    labels = np.repeat(protected_g.expressions(),
                       protected_g.clips[0].frames.shape[0])
    stepper = make_stepper(opt, compensator.n_params,
                           compensator.params.dtype)
    trace: dict = {"epochs": []}
    for epoch in range(opt.epochs):
        rng = stream(opt.seed, "compensate_shuffle", epoch)
        losses = []
        for batch in minibatches(len(frames), opt.batch_size, rng):
            y = labels[batch]

            def loss_fn(pred, y=y):
                ce, _, dx = controller.forward_backward(
                    pred, lambda lg: cross_entropy(lg, y)
                )
                return ce, dx

            loss, grad, _ = compensator.forward_backward(frames[batch], loss_fn)
            if not np.isfinite(loss):
                raise PipelineInvariantError(
                    f"feature compensation diverged: non-finite loss at "
                    f"epoch {epoch}, batch starting {batch[0]}"
                )
            stepper.step(compensator.params, grad)
            losses.append(loss)
        out = compensator.forward(frames)
        logits = controller.forward(out)
        acc = float(np.mean(np.argmax(logits, axis=1) == labels))
        trace["epochs"].append({"epoch": epoch,
                                "ce": float(np.mean(losses)),
                                "controller_accuracy": acc})
    protected_c = map_frames(compensator, protected_g, stage="C")
    return protected_c, trace


def train_feature_compensator(state: PipelineState,
                              protected_g: ProtectedDataset,
                              opt: OptimizerConfig
                              ) -> tuple[PipelineState, ProtectedDataset, dict]:
    """Expression compensation: descend the frozen expression classifier's
    cross-entropy on compensated frames, updating the compensator only."""
    frozen = state.frozen_handles()
    before = _snapshot_digests(frozen)
    protected_c, trace = train_compensator(
        state.compensator, state.compensator_controller, protected_g, opt
    )
    _assert_digests(frozen, before, "train_feature_compensator")
    return state, protected_c, trace


def apply_compensation(state: PipelineState,
                       protected_g: ProtectedDataset) -> ProtectedDataset:
    if protected_g.stage != "G":
        raise StageError(
            f"compensation expects a stage-G input, got {protected_g.stage!r}"
        )
    out = map_frames(state.compensator, protected_g, stage="C")
    return out


def train_utility(model_or_state, data, opt: OptimizerConfig,
                  eval_data=None) -> tuple[ModelHandle, dict]:
    """Clip-level expression training; reports per-epoch training accuracy
    and, when eval_data is given, final held-out accuracy."""
    model = getattr(model_or_state, "utility", model_or_state)
    if model.frozen:
        raise PipelineInvariantError("utility model is frozen")
    if model.role != "utility":
        raise PipelineConfigError(f"expected a utility handle, got {model.role}")
    X = data.frames_array().astype(model.params.dtype)
    y = data.expressions()
    if model.num_classes <= y.max():
        raise PipelineConfigError(
            f"utility has {model.num_classes} classes, labels reach {y.max()}"
        )
    stepper = make_stepper(opt, model.n_params, model.params.dtype)
    trace: dict = {"epochs": []}
    for epoch in range(opt.epochs):
        rng = stream(opt.seed, "utility_shuffle", epoch)
        losses = []
        for batch in minibatches(len(X), opt.batch_size, rng):
            yy = y[batch]
            loss, grad, _ = model.forward_backward(
                X[batch], lambda lg: cross_entropy(lg, yy)
            )
            stepper.step(model.params, grad)
            losses.append(loss)
        pred = _predict_clips(model, X)
        trace["epochs"].append({
            "epoch": epoch,
            "ce": float(np.mean(losses)),
            "train_accuracy": float(np.mean(pred == y)),
        })
    if eval_data is not None:
        Xe = eval_data.frames_array().astype(model.params.dtype)
        ye = eval_data.expressions()
        trace["eval_accuracy"] = float(np.mean(_predict_clips(model, Xe) == ye))
    return model, trace


def _predict_clips(model: ModelHandle, X: np.ndarray, batch: int = 32
                   ) -> np.ndarray:
    preds = []
    for start in range(0, len(X), batch):
        logits = model.forward(X[start:start + batch])
        preds.append(np.argmax(logits, axis=1))
    return np.concatenate(preds)
