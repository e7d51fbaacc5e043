"""End-to-end experiment orchestration.

An :class:`ExperimentContext` holds the split data plus pristine pretrained
handles (identity classifier shared by both controllers and the validator,
expression classifier, band enhancers, compensator).  Each variant clones
what it trains, so one context can serve several variants of the same
configuration: the full pipeline, the six ablation tasks, the blur and
adversarial baselines, and the no-protection reference.
"""

from __future__ import annotations

import csv
import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from freqveil.config import ExperimentConfig, derive_seed
from freqveil.datagen import (
    Dataset,
    generate_synthetic,
    ingest_directory,
    save_dataset,
    split_dataset,
)
from freqveil.metrics import PrivacyReport, accuracy, privacy_leakage_ratio
from freqveil.models import (
    ModelHandle,
    freeze,
    make_reference_model,
    pretrain_classifier,
    pretrain_enhancer,
    save_model,
    train_image_to_image,
)
from freqveil.models.layers import mse_loss
from freqveil.pipeline.baselines import (
    blur_dataset,
    train_joint_with_utility,
    train_tradeoff_baseline,
)
from freqveil.pipeline.core import (
    PipelineState,
    ProtectedDataset,
    apply_band_enhancers,
    apply_compensation,
    apply_privacy,
    decompose_dataset,
    map_frames,
    train_compensator,
    train_feature_compensator,
    train_privacy_enhancer_single,
    train_privacy_enhancers,
    train_utility,
)

TASK_VARIANTS = ("task1", "task2", "task3", "task4", "task5", "task6")


@dataclass
class ExperimentContext:
    config: ExperimentConfig
    train: Dataset
    test: Dataset
    identity_classifier: ModelHandle
    expression_classifier: ModelHandle
    enhancer_low: ModelHandle
    enhancer_high: ModelHandle
    compensator: ModelHandle
    pretrain_traces: dict = field(default_factory=dict)

    def frozen_validator(self) -> ModelHandle:
        return freeze(self.identity_classifier.clone())

    def frozen_identity_controller(self) -> ModelHandle:
        return freeze(self.identity_classifier.clone())

    def frozen_expression_controller(self) -> ModelHandle:
        return freeze(self.expression_classifier.clone())


def prepare_data(cfg: ExperimentConfig) -> tuple[Dataset, Dataset]:
    if cfg.raw["data"]["synthesis"] is not None:
        dataset = generate_synthetic(cfg.synthesis_spec())
    else:
        ing = cfg.raw["data"]["ingest"]
        dataset = ingest_directory(ing["path"], ing["manifest"])
    return split_dataset(dataset, cfg.raw["split"]["test_fraction"],
                         cfg.raw["split"]["seed"])


def _frame_spec(cfg: ExperimentConfig, train: Dataset) -> dict:
    t, h, w, c = train.clip_shape()
    return {"height": h, "width": w, "channels": c}


def fresh_utility(cfg: ExperimentConfig, train: Dataset,
                  tag: str = "utility") -> ModelHandle:
    t, h, w, c = train.clip_shape()
    return make_reference_model(
        "utility",
        {"frames": t, "height": h, "width": w, "channels": c,
         "num_classes": train.num_expressions,
         "width_factor": cfg.raw["models"]["utility_width"]},
        derive_seed(cfg.raw["models"]["init_seed"], tag),
    )


AUX_CLIPS_MULTIPLIER = 3


def _expression_pretrain_data(cfg: ExperimentConfig, train: Dataset) -> Dataset:
    """Data for the expression controller's pretraining.

    For synthetic data a fresh, larger auxiliary population is generated:
    different identity fields (disjoint seed), same expression classes.
    Guiding compensation with a classifier that has never seen the
    protected identities keeps it from steering frames back toward them.
    """
    syn = cfg.synthesis_spec()
    if syn is None:
        return train
    from dataclasses import replace as drep

    aux_spec = drep(syn, seed=derive_seed(syn.seed, "aux_identities"),
                    clips_per_pair=syn.clips_per_pair * AUX_CLIPS_MULTIPLIER)
    return generate_synthetic(aux_spec)


def prepare_context(cfg: ExperimentConfig) -> ExperimentContext:
    """Generate/split the data and run every pretraining stage once."""
    train, test = prepare_data(cfg)
    models_cfg = cfg.raw["models"]
    init = models_cfg["init_seed"]
    frame_spec = _frame_spec(cfg, train)
    traces: dict = {}

    identity = make_reference_model(
        "classifier",
        {**frame_spec, "num_classes": train.num_identities,
         "width_factor": models_cfg["classifier_width"]},
        derive_seed(init, "identity_classifier"),
    )
    identity, traces["identity_classifier"] = pretrain_classifier(
        identity, train, "identity", "all_frames",
        cfg.optimizer("pretrain_classifier"),
    )

    expr_data = _expression_pretrain_data(cfg, train)
    expression = make_reference_model(
        "classifier",
        {**frame_spec, "num_classes": train.num_expressions,
         "width_factor": models_cfg["classifier_width"]},
        derive_seed(init, "expression_classifier"),
    )
    expression, traces["expression_classifier"] = pretrain_classifier(
        expression, expr_data, "expression", "one_random_frame_per_clip",
        cfg.optimizer("pretrain_expression"),
    )

    transform = cfg.transform()
    pairs, _, _ = decompose_dataset(train, transform)
    low_slices = np.concatenate([p.low for p in pairs], axis=0)
    high_slices = np.concatenate([b for p in pairs for b in p.high], axis=0)
    enh_opt = cfg.optimizer("pretrain_enhancer")

    enhancer_low = make_reference_model(
        "enhancer", {**frame_spec, "width_factor": models_cfg["enhancer_width"]},
        derive_seed(init, "enhancer_low"))
    enhancer_low, traces["enhancer_low"] = pretrain_enhancer(
        enhancer_low, low_slices, enh_opt)

    enhancer_high = make_reference_model(
        "enhancer", {**frame_spec, "width_factor": models_cfg["enhancer_width"]},
        derive_seed(init, "enhancer_high"))
    enhancer_high, traces["enhancer_high"] = pretrain_enhancer(
        enhancer_high, high_slices, enh_opt)

    compensator = make_reference_model(
        "compensator",
        {**frame_spec, "width_factor": models_cfg["compensator_width"]},
        derive_seed(init, "compensator"))
    frames = np.concatenate([c.frames for c in train.clips], axis=0)
    compensator, traces["compensator"] = pretrain_enhancer(
        compensator, frames, enh_opt)

    return ExperimentContext(
        config=cfg, train=train, test=test,
        identity_classifier=freeze(identity),
        expression_classifier=freeze(expression),
        enhancer_low=enhancer_low, enhancer_high=enhancer_high,
        compensator=compensator, pretrain_traces=traces,
    )


def build_pipeline_state(cfg: ExperimentConfig,
                         ctx: ExperimentContext) -> PipelineState:
    return PipelineState(
        enhancer_high=ctx.enhancer_high.clone(),
        enhancer_low=ctx.enhancer_low.clone(),
        controller_high=ctx.frozen_identity_controller(),
        controller_low=ctx.frozen_identity_controller(),
        compensator=ctx.compensator.clone(),
        compensator_controller=ctx.frozen_expression_controller(),
        validator=ctx.frozen_validator(),
        utility=fresh_utility(cfg, ctx.train),
        transform=cfg.transform(),
    )


@dataclass
class VariantResult:
    variant: str
    report: PrivacyReport
    metrics: dict
    protected: dict
    handles: dict
    traces: dict


def run_variant_in_context(cfg: ExperimentConfig, ctx: ExperimentContext,
                           variant: str | None = None) -> VariantResult:
    variant = variant or cfg.variant
    frame_seed = cfg.seeds["frame"]
    validator = ctx.frozen_validator()
    ir_cfg = cfg.raw["identity_removal"]
    cap, mode = ir_cfg["loss_cap"], ir_cfg["ascent_mode"]
    traces: dict = {}
    handles: dict = {"validator": validator}
    protected: dict = {}
    extras: dict = {}

    def run_utility(train_set, test_set, tag="utility"):
        # restarts damp the sensitivity of tiny-net training to its init
        # stream: the restart with the best final training accuracy wins
        restarts = max(1, cfg.raw["models"]["utility_restarts"])
        best = None
        for r in range(restarts):
            utility = fresh_utility(cfg, ctx.train, f"{tag}_r{r}")
            utility, trace = train_utility(utility, train_set,
                                           cfg.optimizer("utility"),
                                           eval_data=test_set)
            score = trace["epochs"][-1]["train_accuracy"]
            if best is None or score > best[0]:
                best = (score, utility, trace)
        return best[1], best[2]

    if variant == "none":
        final_train, final_test = ctx.train, ctx.test
        utility, traces["utility"] = run_utility(final_train, final_test)

    elif variant in ("full", "task4", "task5"):
        state = build_pipeline_state(cfg, ctx)
        handles.update({
            "enhancer_high": state.enhancer_high,
            "enhancer_low": state.enhancer_low,
            "controller_high": state.controller_high,
            "controller_low": state.controller_low,
        })
        state, g_train, traces["identity_removal"] = train_privacy_enhancers(
            state, ctx.train, cfg.optimizer("identity_removal"), cap, mode)
        g_test = apply_privacy(state, ctx.test)
        protected["G"] = (g_train, g_test)
        extras["plr_stage_g"] = privacy_leakage_ratio(
            validator, g_test, frame_seed)[0]

        if variant == "full":
            handles["compensator"] = state.compensator
            handles["compensator_controller"] = state.compensator_controller
            state, c_train, traces["compensation"] = train_feature_compensator(
                state, g_train, cfg.optimizer("compensation"))
            c_test = apply_compensation(state, g_test)
            protected["C"] = (c_train, c_test)
            final_train, final_test = c_train, c_test
            if cfg.raw["report_stage_g"]:
                _, g_trace = run_utility(g_train, g_test, tag="utility")
                extras["utility_accuracy_stage_g"] = g_trace["eval_accuracy"]
                traces["utility_stage_g"] = g_trace
        elif variant == "task4":
            compensator = ctx.compensator.clone()
            handles["compensator"] = compensator
            g_frames = np.concatenate([c.frames for c in g_train.clips], axis=0)
            compensator, traces["compensation"] = train_image_to_image(
                compensator, g_frames, g_frames,
                cfg.optimizer("compensation"), loss_pair=mse_loss)
            c_train = map_frames(compensator, g_train, stage="C")
            c_test = map_frames(compensator, g_test, stage="C")
            protected["C"] = (c_train, c_test)
            final_train, final_test = c_train, c_test
        else:  # task5: no compensation at all
            final_train, final_test = g_train, g_test
        utility, traces["utility"] = run_utility(final_train, final_test)

    elif variant in ("task1", "task2", "task3"):
        enhancer = ctx.enhancer_high.clone()
        handles["enhancer"] = enhancer
        if variant == "task2":
            joint_utility = fresh_utility(cfg, ctx.train, "joint_utility")
            traces["joint"] = train_joint_with_utility(
                ctx.train, joint_utility, {"frames": enhancer},
                cfg.optimizer("joint"), transform=None,
                identity_classifier=None, lam=0.0, loss_cap=cap,
                frame_seed=frame_seed,
                enhancer_opt=cfg.optimizer("joint_enhancer"),
                warmup_epochs=cfg.raw["variant_params"]["joint_warmup_epochs"])
            g_train = map_frames(enhancer, ctx.train, stage="G")
        else:
            controller = ctx.frozen_identity_controller()
            handles["controller"] = controller
            g_train, traces["identity_removal"] = train_privacy_enhancer_single(
                enhancer, controller, ctx.train,
                cfg.optimizer("identity_removal"), cap, mode)
        g_test = map_frames(enhancer, ctx.test, stage="G")
        protected["G"] = (g_train, g_test)
        extras["plr_stage_g"] = privacy_leakage_ratio(
            validator, g_test, frame_seed)[0]

        if variant in ("task1", "task2"):
            compensator = ctx.compensator.clone()
            controller_fc = ctx.frozen_expression_controller()
            handles["compensator"] = compensator
            c_train, traces["compensation"] = train_compensator(
                compensator, controller_fc, g_train,
                cfg.optimizer("compensation"))
            c_test = map_frames(compensator, g_test, stage="C")
            protected["C"] = (c_train, c_test)
            final_train, final_test = c_train, c_test
        else:  # task3: privacy stream only
            final_train, final_test = g_train, g_test
        utility, traces["utility"] = run_utility(final_train, final_test)

    elif variant == "task6":
        enhancers = {"low": ctx.enhancer_low.clone(),
                     "high": ctx.enhancer_high.clone()}
        handles.update({"enhancer_low": enhancers["low"],
                        "enhancer_high": enhancers["high"]})
        utility = fresh_utility(cfg, ctx.train, "joint_utility")
        traces["joint"] = train_joint_with_utility(
            ctx.train, utility, enhancers, cfg.optimizer("joint"),
            transform=cfg.transform(), identity_classifier=None, lam=0.0,
            loss_cap=cap, frame_seed=frame_seed,
            enhancer_opt=cfg.optimizer("joint_enhancer"),
            warmup_epochs=cfg.raw["variant_params"]["joint_warmup_epochs"])
        g_train = apply_band_enhancers(enhancers["low"], enhancers["high"],
                                       cfg.transform(), ctx.train)
        g_test = apply_band_enhancers(enhancers["low"], enhancers["high"],
                                      cfg.transform(), ctx.test)
        protected["G"] = (g_train, g_test)
        final_train, final_test = g_train, g_test
        traces["utility"] = {
            "eval_accuracy": accuracy(utility, final_test, "expression")[0]
        }

    elif variant == "gaussian":
        vp = cfg.raw["variant_params"]
        final_train = blur_dataset(ctx.train, vp["sigma"], vp["kernel_radius"])
        final_test = blur_dataset(ctx.test, vp["sigma"], vp["kernel_radius"])
        extras["sigma"] = vp["sigma"]
        utility, traces["utility"] = run_utility(final_train, final_test)

    elif variant == "tradeoff":
        vp = cfg.raw["variant_params"]
        anonymizer, joint_utility, traces["joint"] = train_tradeoff_baseline(
            ctx.train, cfg.optimizer("joint"), lam=vp["lambda"],
            width_factor=cfg.raw["models"]["enhancer_width"],
            init_seed=derive_seed(cfg.raw["models"]["init_seed"], "tradeoff"),
            loss_cap=cap, frame_seed=frame_seed,
            enhancer_opt=cfg.optimizer("joint_enhancer"),
            identity_opt=cfg.optimizer("joint_identity"),
            warmup_epochs=cfg.raw["variant_params"]["joint_warmup_epochs"],
            pretrain_opt=cfg.optimizer("pretrain_enhancer"))
        handles["anonymizer"] = anonymizer
        final_train = map_frames(anonymizer, ctx.train, stage="G")
        final_test = map_frames(anonymizer, ctx.test, stage="G")
        protected["G"] = (final_train, final_test)
        extras["lambda"] = vp["lambda"]
        utility, traces["utility"] = run_utility(final_train, final_test)

    else:
        raise ValueError(f"unknown variant {variant!r}")

    handles["utility"] = utility
    protected["final"] = (final_train, final_test)

    plr, confusion = privacy_leakage_ratio(validator, final_test, frame_seed)
    acc, per_class = accuracy(utility, final_test, "expression")
    extras["plr_unprotected"] = privacy_leakage_ratio(
        validator, ctx.test, frame_seed)[0]
    report = PrivacyReport(
        plr=plr, utility_accuracy=acc, per_class_accuracy=per_class,
        identity_confusion=confusion.tolist(),
        chance_level=1.0 / ctx.train.num_identities,
        variant_id=variant, seed=cfg.seeds["global"],
    )
    metrics = {
        "variant_id": variant,
        "seed": cfg.seeds["global"],
        "plr": plr,
        "utility_accuracy": acc,
        "per_class_accuracy": per_class,
        "chance_level": report.chance_level,
        "identity_confusion": confusion.tolist(),
        "extras": extras,
    }
    return VariantResult(variant=variant, report=report, metrics=metrics,
                         protected=protected, handles=handles, traces=traces)


def run_ablation(task_id: int, base_config: ExperimentConfig | dict,
                 context: ExperimentContext | None = None) -> PrivacyReport:
    """Assemble and run one ablation variant, returning its report."""
    if not (1 <= int(task_id) <= 6):
        raise ValueError(f"task_id must be in 1..6, got {task_id}")
    if isinstance(base_config, dict):
        base_config = ExperimentConfig.from_dict(base_config)
    ctx = context or prepare_context(base_config)
    result = run_variant_in_context(base_config, ctx, f"task{int(task_id)}")
    return result.report


def _write_losses_csv(path: Path, traces: dict) -> None:
    rows = []
    for stage, trace in traces.items():
        entries = trace.get("epochs") if isinstance(trace, dict) else None
        if entries is None:
            if isinstance(trace, dict) and "loss" in trace:
                entries = [{"epoch": i, "loss": v}
                           for i, v in enumerate(trace["loss"])]
            else:
                continue
        for entry in entries:
            for key, value in entry.items():
                if key == "epoch" or value is None:
                    continue
                rows.append({"stage": stage, "epoch": entry.get("epoch", ""),
                             "metric": key, "value": value})
    with open(path, "w", newline="") as fh:
        writer = csv.DictWriter(fh, fieldnames=["stage", "epoch", "metric",
                                                "value"], lineterminator="\n")
        writer.writeheader()
        writer.writerows(rows)


def persist_variant(result: VariantResult, cfg: ExperimentConfig,
                    run_dir: str | Path) -> Path:
    """Write the run directory: config snapshot, checkpoints, protected
    dumps, metrics JSON and loss-trace CSV."""
    run_dir = Path(run_dir)
    run_dir.mkdir(parents=True, exist_ok=True)
    cfg.write_snapshot(run_dir)
    for name, handle in result.handles.items():
        save_model(handle, run_dir / "checkpoints" / name)
    for stage, (train_set, test_set) in result.protected.items():
        base = run_dir / f"protected_{stage}"
        save_dataset(_as_dataset(train_set), base / "train")
        save_dataset(_as_dataset(test_set), base / "test")
    with open(run_dir / "metrics.json", "w") as fh:
        json.dump(result.metrics, fh, sort_keys=True, indent=2)
    with open(run_dir / "report.json", "w") as fh:
        fh.write(result.report.to_json())
    _write_losses_csv(run_dir / "losses.csv", result.traces)
    return run_dir


def _as_dataset(ds) -> Dataset:
    if isinstance(ds, ProtectedDataset):
        return ds.to_dataset()
    return ds
