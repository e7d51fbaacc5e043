"""Config-driven experiment commands.

Subcommands: generate | pretrain | train | evaluate | attack | ablate |
report.  Every command is deterministic given the config and seeds, exits
0 on success, and reports structured errors (all config violations at
once) otherwise.
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

from freqveil.config import ConfigError, ExperimentConfig
from freqveil.datagen import load_dataset, save_dataset
from freqveil.metrics import (
    ThreatReport,
    assemble_report,
    report_rows_to_csv,
    report_rows_to_json,
)
from freqveil.models import load_model, save_model
from freqveil.pipeline.attack import run_threat_attack
from freqveil.runner import (
    TASK_VARIANTS,
    persist_variant,
    prepare_context,
    prepare_data,
    run_variant_in_context,
)


class CommandError(RuntimeError):
    """Raised for missing artifacts or invalid command usage."""


def _load_config(args) -> ExperimentConfig:
    user: dict = {}
    if args.config:
        with open(args.config) as fh:
            user = json.load(fh)
    if getattr(args, "seed", None) is not None:
        user.setdefault("seeds", {})["global"] = args.seed
    if getattr(args, "variant", None):
        user["variant"] = args.variant
    return ExperimentConfig.from_dict(user)


def cmd_generate(args) -> int:
    cfg = _load_config(args)
    train, test = prepare_data(cfg)
    out = Path(args.out)
    save_dataset(train, out / "dataset" / "train")
    save_dataset(test, out / "dataset" / "test")
    cfg.write_snapshot(out)
    print(f"wrote {len(train)} train / {len(test)} test clips to {out / 'dataset'}")
    return 0


def cmd_pretrain(args) -> int:
    cfg = _load_config(args)
    ctx = prepare_context(cfg)
    out = Path(args.out)
    pre = out / "pretrained"
    for name, handle in [
        ("identity_classifier", ctx.identity_classifier),
        ("expression_classifier", ctx.expression_classifier),
        ("enhancer_low", ctx.enhancer_low),
        ("enhancer_high", ctx.enhancer_high),
        ("compensator", ctx.compensator),
    ]:
        save_model(handle, pre / name)
    with open(pre / "pretrain_metrics.json", "w") as fh:
        json.dump(ctx.pretrain_traces, fh, sort_keys=True, indent=2)
    cfg.write_snapshot(out)
    acc = ctx.pretrain_traces["identity_classifier"]["accuracy"][-1]
    print(f"pretrained checkpoints in {pre} (identity train accuracy {acc:.3f})")
    return 0


def cmd_train(args) -> int:
    cfg = _load_config(args)
    ctx = prepare_context(cfg)
    result = run_variant_in_context(cfg, ctx)
    run_dir = Path(args.out) / "runs" / result.variant
    persist_variant(result, cfg, run_dir)
    print(f"run complete: variant={result.variant} "
          f"PLR={result.report.plr:.4f} ACC={result.report.utility_accuracy:.4f} "
          f"-> {run_dir}")
    return 0


def _require_dir(path: Path, what: str) -> Path:
    if not path.exists():
        raise CommandError(f"missing artifact: {what} at {path}")
    return path


def cmd_evaluate(args) -> int:
    run_dir = Path(args.run_dir)
    cfg = ExperimentConfig.verify_snapshot(run_dir)
    test_dir = _require_dir(run_dir / "protected_final" / "test",
                            "final protected test dump")
    validator_dir = _require_dir(run_dir / "checkpoints" / "validator",
                                 "validator checkpoint")
    utility_dir = _require_dir(run_dir / "checkpoints" / "utility",
                               "utility checkpoint")
    from freqveil.metrics import PrivacyReport, accuracy, privacy_leakage_ratio

    protected_test = load_dataset(test_dir)
    validator = load_model(validator_dir)
    utility = load_model(utility_dir)
    plr, confusion = privacy_leakage_ratio(validator, protected_test,
                                           cfg.seeds["frame"])
    acc, per_class = accuracy(utility, protected_test, "expression")
    report = PrivacyReport(
        plr=plr, utility_accuracy=acc, per_class_accuracy=per_class,
        identity_confusion=confusion.tolist(),
        chance_level=1.0 / protected_test.num_identities,
        variant_id=cfg.variant, seed=cfg.seeds["global"],
    )
    with open(run_dir / "report.json", "w") as fh:
        fh.write(report.to_json())
    rows = assemble_report([report])
    with open(run_dir / "report.csv", "w") as fh:
        fh.write(report_rows_to_csv(rows))
    print(report_rows_to_csv(rows), end="")
    return 0


def cmd_attack(args) -> int:
    run_dir = Path(args.run_dir)
    cfg = ExperimentConfig.verify_snapshot(run_dir)
    train_dir = _require_dir(run_dir / "protected_final" / "train",
                             "final protected train dump")
    test_dir = _require_dir(run_dir / "protected_final" / "test",
                            "final protected test dump")
    validator_dir = _require_dir(run_dir / "checkpoints" / "validator",
                                 "validator checkpoint")
    protected_train = load_dataset(train_dir)
    protected_test = load_dataset(test_dir)
    original_train, original_test = prepare_data(cfg)
    validator = load_model(validator_dir)
    report, recovery, _ = run_threat_attack(
        protected_train, original_train, protected_test, original_test,
        validator, cfg.optimizer("attack"), frame_seed=cfg.seeds["frame"],
        method_id=cfg.variant,
        recovery_width=cfg.raw["models"]["recovery_width"],
        recovery_seed=cfg.raw["models"]["init_seed"] + 1,
    )
    with open(run_dir / "threat.json", "w") as fh:
        fh.write(report.to_json())
    save_model(recovery, run_dir / "checkpoints" / "recovery")
    print(f"threat report: SSIM={report.ssim:.4f} PSNR={report.psnr:.4f} "
          f"PLR={report.plr:.4f} -> {run_dir / 'threat.json'}")
    return 0


def cmd_ablate(args) -> int:
    cfg = _load_config(args)
    tasks = sorted(set(args.tasks)) if args.tasks else [1, 2, 3, 4, 5, 6]
    bad = [t for t in tasks if not 1 <= t <= 6]
    if bad:
        raise CommandError(f"tasks must be in 1..6, got {bad}")
    ctx = prepare_context(cfg)
    reports = []
    for variant in ["full"] + [f"task{t}" for t in tasks]:
        result = run_variant_in_context(cfg, ctx, variant)
        persist_variant(result, cfg, Path(args.out) / "runs" / variant)
        reports.append(result.report)
        print(f"  {variant}: PLR={result.report.plr:.4f} "
              f"ACC={result.report.utility_accuracy:.4f}", flush=True)
    rows = assemble_report(reports)
    out = Path(args.out) / "reports"
    out.mkdir(parents=True, exist_ok=True)
    with open(out / "ablation.csv", "w") as fh:
        fh.write(report_rows_to_csv(rows))
    with open(out / "ablation.json", "w") as fh:
        fh.write(report_rows_to_json(rows))
    print(f"ablation table -> {out / 'ablation.csv'}")
    return 0


def _plot_rows(rows: list[dict], path: Path) -> None:
    import matplotlib

    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    variants = [r["variant"] for r in rows]
    plr = [r["PLR"] if r["PLR"] is not None else float("nan") for r in rows]
    acc = [r["ACC"] if r["ACC"] is not None else float("nan") for r in rows]
    x = range(len(variants))
    fig, ax = plt.subplots(figsize=(1.6 + 0.9 * len(variants), 3.6))
    width = 0.38
    ax.bar([i - width / 2 for i in x], plr, width, label="leakage ratio")
    ax.bar([i + width / 2 for i in x], acc, width, label="utility accuracy")
    if rows and rows[0].get("chance") is not None:
        ax.axhline(rows[0]["chance"], linestyle="--", linewidth=1.0,
                   color="gray", label="chance")
    ax.set_xticks(list(x))
    ax.set_xticklabels(variants, rotation=30, ha="right")
    ax.set_ylim(0, 1.05)
    ax.legend(fontsize=8)
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)


def cmd_report(args) -> int:
    privacy_reports, threat_reports = [], []
    from freqveil.metrics import PrivacyReport

    for run_dir in args.run_dirs:
        run_dir = Path(run_dir)
        rep = _require_dir(run_dir / "report.json", "report.json")
        with open(rep) as fh:
            privacy_reports.append(PrivacyReport.from_json(fh.read()))
        threat_file = run_dir / "threat.json"
        if threat_file.exists():
            with open(threat_file) as fh:
                threat_reports.append(ThreatReport.from_json(fh.read()))
    rows = assemble_report(privacy_reports, threat_reports)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    with open(out / "comparison.csv", "w") as fh:
        fh.write(report_rows_to_csv(rows))
    with open(out / "comparison.json", "w") as fh:
        fh.write(report_rows_to_json(rows))
    if args.plot:
        _plot_rows(rows, out / "comparison.png")
        print(f"plot -> {out / 'comparison.png'}")
    print(report_rows_to_csv(rows), end="")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="freqveil",
        description="Frequency-split identity removal experiments",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p, needs_out=True):
        p.add_argument("--config", help="JSON experiment config")
        p.add_argument("--seed", type=int, help="override seeds.global")
        p.add_argument("--variant", help="override the configured variant")
        if needs_out:
            p.add_argument("--out", required=True, help="output directory")

    p = sub.add_parser("generate", help="generate and save the dataset splits")
    common(p)
    p.set_defaults(func=cmd_generate)

    p = sub.add_parser("pretrain", help="pretrain controllers, validator and enhancers")
    common(p)
    p.set_defaults(func=cmd_pretrain)

    p = sub.add_parser("train", help="run one variant end to end")
    common(p)
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("evaluate", help="recompute the report for a run directory")
    p.add_argument("run_dir")
    p.set_defaults(func=cmd_evaluate)

    p = sub.add_parser("attack", help="run the recovery attack against a run")
    p.add_argument("run_dir")
    p.set_defaults(func=cmd_attack)

    p = sub.add_parser("ablate", help="run ablation tasks plus the full pipeline")
    common(p)
    p.add_argument("--tasks", type=int, nargs="*", help="subset of 1..6")
    p.set_defaults(func=cmd_ablate)

    p = sub.add_parser("report", help="merge run reports into a comparison table")
    p.add_argument("run_dirs", nargs="+")
    p.add_argument("--out", required=True)
    p.add_argument("--plot", action="store_true", help="emit a PNG bar chart")
    p.set_defaults(func=cmd_report)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except CommandError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 3
    except FileNotFoundError as exc:
        print(f"error: missing file: {exc}", file=sys.stderr)
        return 3


if __name__ == "__main__":
    sys.exit(main())
