"""Comparison baselines: Gaussian blur distortion and joint (min–max)
anonymizer/utility training without frozen controllers.

The joint trainer also powers the controller-free ablation variants: with
no identity branch it degenerates to "train the enhancers while training
the utility model", which is exactly what those variants call for.
"""

from __future__ import annotations

import math
from dataclasses import replace

import numpy as np
from scipy.ndimage import correlate1d

from freqveil.datagen import Dataset, VideoClip
from freqveil.frequency import TransformConfig, decompose, reconstruct
from freqveil.models import ModelHandle, OptimizerConfig, make_reference_model
from freqveil.models.layers import cross_entropy
from freqveil.models.optim import make_stepper
from freqveil.models.training import minibatches
from freqveil.pipeline.core import PipelineConfigError, PipelineInvariantError
from freqveil.rngs import stream


def gaussian_kernel(sigma: float, radius: int, normalized: bool = True
                    ) -> np.ndarray:
    """Truncated 2-D Gaussian kernel on a (2r+1)² grid.

    The unnormalized value at offset (x, y) is
    exp(-(x²+y²)/(2σ²)) / (2πσ²); the normalized kernel sums to one.
    """
    if sigma <= 0:
        raise ValueError(f"sigma must be > 0, got {sigma}")
    if radius < 1:
        raise ValueError(f"kernel_radius must be >= 1, got {radius}")
    coords = np.arange(-radius, radius + 1, dtype=np.float64)
    xx, yy = np.meshgrid(coords, coords, indexing="ij")
    kernel = np.exp(-(xx ** 2 + yy ** 2) / (2.0 * sigma ** 2))
    kernel /= 2.0 * math.pi * sigma ** 2
    if normalized:
        kernel = kernel / kernel.sum()
    return kernel


def _blur_frames(frames: np.ndarray, sigma: float, radius: int) -> np.ndarray:
    coords = np.arange(-radius, radius + 1, dtype=np.float64)
    k1 = np.exp(-(coords ** 2) / (2.0 * sigma ** 2))
    k1 /= k1.sum()
    out = correlate1d(frames.astype(np.float64), k1, axis=1, mode="reflect")
    out = correlate1d(out, k1, axis=2, mode="reflect")
    return out.astype(np.float32)


def gaussian_blur(clip: VideoClip, sigma: float, kernel_radius: int
                  ) -> VideoClip:
    """Per-frame 2-D Gaussian blur with a truncated, renormalized kernel
    and reflective boundary handling."""
    gaussian_kernel(sigma, kernel_radius)  # validates the arguments
    return replace(clip, frames=_blur_frames(clip.frames, sigma, kernel_radius))


def blur_dataset(dataset, sigma: float, kernel_radius: int = 4) -> Dataset:
    clips = [gaussian_blur(c, sigma, kernel_radius) for c in dataset.clips]
    return Dataset(clips, dataset.num_identities, dataset.num_expressions,
                   provenance="blurred")


def _stack_bands(pairs):
    lows = np.concatenate([p.low for p in pairs], axis=0)
    high_splits = [[b.shape[0] for b in p.high] for p in pairs]
    highs = np.concatenate([b for p in pairs for b in p.high], axis=0)
    low_splits = [p.low.shape[0] for p in pairs]
    return lows, highs, low_splits, high_splits


def train_joint_with_utility(dataset, utility: ModelHandle,
                             enhancers: dict[str, ModelHandle],
                             opt: OptimizerConfig,
                             transform: TransformConfig | None = None,
                             identity_classifier: ModelHandle | None = None,
                             lam: float = 1.0,
                             loss_cap: float = 16.0,
                             frame_seed: int = 0,
                             enhancer_opt: OptimizerConfig | None = None,
                             identity_opt: OptimizerConfig | None = None,
                             warmup_epochs: int = 0) -> dict:
    """Alternating joint optimization.

    Every batch: (1) the utility model descends its expression
    cross-entropy on the enhanced clips; (2) if an identity branch is
    present it descends its own identity cross-entropy on one seeded frame
    per enhanced clip; (3) the enhancers descend
    utility_loss - lam * identity_loss.  If the identity loss exceeds
    loss_cap the identity term is dropped for the rest of the epoch.

    ``opt`` drives the utility model and the epoch/batch layout;
    ``enhancer_opt``/``identity_opt`` override the step sizes of the other
    two players (they default to ``opt``).  During the first
    ``warmup_epochs`` epochs only the classifiers update, so the enhancers
    do not drift while the utility model is still at chance.
    """
    if transform is not None:
        if set(enhancers) != {"low", "high"}:
            raise PipelineConfigError(
                "transform-based joint training needs 'low' and 'high' enhancers"
            )
        if not transform.is_orthonormal():
            raise PipelineConfigError(
                "joint training backpropagates through the inverse transform "
                "and needs an orthonormal (periodic) configuration"
            )
        if transform.axis != "temporal":
            raise PipelineConfigError("joint training supports temporal transforms")
    else:
        if set(enhancers) != {"frames"}:
            raise PipelineConfigError(
                "transform-free joint training needs a single 'frames' enhancer"
            )
    for name, h in enhancers.items():
        if h.frozen:
            raise PipelineInvariantError(f"enhancer {name!r} is frozen")
    if utility.frozen:
        raise PipelineInvariantError("utility model is frozen")

    X = dataset.frames_array()
    expressions = dataset.expressions()
    identities = dataset.identities()
    n, t = X.shape[0], X.shape[1]
    dtype = utility.params.dtype

    enhancer_opt = enhancer_opt or opt
    identity_opt = identity_opt or opt
    util_step = make_stepper(opt, utility.n_params, dtype)
    enh_steps = {k: make_stepper(enhancer_opt, h.n_params, h.params.dtype)
                 for k, h in enhancers.items()}
    id_step = (make_stepper(identity_opt, identity_classifier.n_params, dtype)
               if identity_classifier is not None else None)

    trace: dict = {"epochs": [], "cap_events": []}
    for epoch in range(opt.epochs):
        rng = stream(opt.seed, "joint_shuffle", epoch)
        ce_us, ce_ids = [], []
        identity_active = identity_classifier is not None
        enhancers_active = epoch >= warmup_epochs
        for batch in minibatches(n, opt.batch_size, rng):
            clips = X[batch].astype(dtype)
            y_expr = expressions[batch]
            y_id = identities[batch]
            b = len(batch)

            if transform is not None:
                pairs = [decompose(clips[i], transform) for i in range(b)]
                lows, highs, low_splits, high_splits = _stack_bands(pairs)
                arch_lo = enhancers["low"].architecture
                arch_hi = enhancers["high"].architecture
                out_lo, cache_lo = arch_lo.forward(
                    enhancers["low"].params, lows.astype(dtype), want_cache=True)
                out_hi, cache_hi = arch_hi.forward(
                    enhancers["high"].params, highs.astype(dtype), want_cache=True)
                protected = np.empty_like(clips)
                pos_l = pos_h = 0
                for i, pair in enumerate(pairs):
                    pair.low = out_lo[pos_l:pos_l + low_splits[i]]
                    pos_l += low_splits[i]
                    new_high = []
                    for extent in high_splits[i]:
                        new_high.append(out_hi[pos_h:pos_h + extent])
                        pos_h += extent
                    pair.high = new_high
                    protected[i] = reconstruct(pair)
            else:
                arch = enhancers["frames"].architecture
                flat = clips.reshape((-1,) + clips.shape[2:])
                out, cache = arch.forward(enhancers["frames"].params,
                                          flat, want_cache=True)
                protected = out.reshape(clips.shape)

            # downstream players see the deployable range; the mask stops
            # gradients from pushing pixels further out of it
            in_range = ((protected > 0.0) & (protected < 1.0)).astype(dtype)
            protected = np.clip(protected, 0.0, 1.0)

            ce_u, grad_u, dclip = utility.forward_backward(
                protected, lambda lg: cross_entropy(lg, y_expr)
            )
            util_step.step(utility.params, grad_u)
            ce_us.append(ce_u)

            dprot = dclip.astype(dtype)
            if identity_classifier is not None:
                picks = np.array([
                    int(stream(frame_seed, "joint_frame", epoch, int(gi))
                        .integers(t)) for gi in batch
                ])
                frames = protected[np.arange(b), picks]
                ce_id, grad_id, dframes = identity_classifier.forward_backward(
                    frames, lambda lg: cross_entropy(lg, y_id)
                )
                id_step.step(identity_classifier.params, grad_id)
                ce_ids.append(ce_id)
                if identity_active and ce_id > loss_cap:
                    identity_active = False
                    trace["cap_events"].append(
                        {"epoch": epoch, "cross_entropy": ce_id}
                    )
                if identity_active and lam != 0.0:
                    dprot = dprot.copy()
                    dprot[np.arange(b), picks] -= lam * dframes

            if not enhancers_active:
                continue
            dprot = dprot * in_range
            if transform is not None:
                dlow = np.empty_like(out_lo)
                dhigh = np.empty_like(out_hi)
                pos_l = pos_h = 0
                for i in range(b):
                    dpair = decompose(dprot[i], transform)
                    dlow[pos_l:pos_l + low_splits[i]] = dpair.low
                    pos_l += low_splits[i]
                    for j, extent in enumerate(high_splits[i]):
                        dhigh[pos_h:pos_h + extent] = dpair.high[j]
                        pos_h += extent
                g_lo, _ = arch_lo.backward(cache_lo, dlow)
                g_hi, _ = arch_hi.backward(cache_hi, dhigh)
                enh_steps["low"].step(enhancers["low"].params, g_lo)
                enh_steps["high"].step(enhancers["high"].params, g_hi)
            else:
                g, _ = arch.backward(cache, dprot.reshape(out.shape))
                enh_steps["frames"].step(enhancers["frames"].params, g)

        trace["epochs"].append({
            "epoch": epoch,
            "ce_utility": float(np.mean(ce_us)),
            "ce_identity": float(np.mean(ce_ids)) if ce_ids else None,
        })
    return trace


def train_tradeoff_baseline(dataset, opt: OptimizerConfig, lam: float = 1.0,
                            width_factor: int = 8, init_seed: int = 0,
                            loss_cap: float = 16.0, frame_seed: int = 0,
                            enhancer_opt: OptimizerConfig | None = None,
                            identity_opt: OptimizerConfig | None = None,
                            warmup_epochs: int = 0,
                            pretrain_opt: OptimizerConfig | None = None
                            ) -> tuple[ModelHandle, ModelHandle, dict]:
    """Bi-objective adversarial baseline: a frame anonymizer is trained
    jointly with a utility model while a fresh identity classifier retrains
    to track it; the anonymizer descends utility_loss - lam * identity_loss.

    When ``pretrain_opt`` is given the anonymizer first learns to
    reconstruct its input under L1 loss, so the adversarial game starts
    from an information-preserving map rather than a random one.
    """
    from freqveil.models.training import pretrain_enhancer

    t, h, w, c = dataset.clip_shape()
    anonymizer = make_reference_model(
        "enhancer", {"height": h, "width": w, "channels": c,
                     "width_factor": width_factor}, init_seed)
    if pretrain_opt is not None:
        frames = np.concatenate([cl.frames for cl in dataset.clips], axis=0)
        anonymizer, _ = pretrain_enhancer(anonymizer, frames, pretrain_opt)
    identity_clf = make_reference_model(
        "classifier", {"height": h, "width": w, "channels": c,
                       "num_classes": dataset.num_identities,
                       "width_factor": width_factor}, init_seed + 1)
    utility = make_reference_model(
        "utility", {"frames": t, "height": h, "width": w, "channels": c,
                    "num_classes": dataset.num_expressions,
                    "width_factor": 6}, init_seed + 2)
    trace = train_joint_with_utility(
        dataset, utility, {"frames": anonymizer}, opt,
        transform=None, identity_classifier=identity_clf, lam=lam,
        loss_cap=loss_cap, frame_seed=frame_seed,
        enhancer_opt=enhancer_opt, identity_opt=identity_opt,
        warmup_epochs=warmup_epochs,
    )
    return anonymizer, utility, trace


def calibrate_blur_sigma(train, test, target_accuracy: float,
                         sigmas, utility_factory, opt: OptimizerConfig,
                         kernel_radius: int = 4) -> tuple[float, list[dict]]:
    """Pick the blur strength whose utility accuracy is closest to the
    target (the comparable-utility matching protocol)."""
    from freqveil.pipeline.core import train_utility

    results = []
    for sigma in sigmas:
        blurred_train = blur_dataset(train, sigma, kernel_radius)
        blurred_test = blur_dataset(test, sigma, kernel_radius)
        utility = utility_factory()
        _, trace = train_utility(utility, blurred_train, opt,
                                 eval_data=blurred_test)
        results.append({"sigma": float(sigma),
                        "accuracy": trace["eval_accuracy"]})
    best = min(results, key=lambda r: abs(r["accuracy"] - target_accuracy))
    return best["sigma"], results
